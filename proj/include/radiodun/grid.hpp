#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace radiodun {

/// Dense H x W scalar field, row-major. Flat index = r * w + c.
struct GridMap {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    GridMap() = default;
    GridMap(int height, int width, double fill = 0.0)
        : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {
        if (height < 0 || width < 0) throw std::invalid_argument("GridMap: negative dims");
    }

    size_t size() const { return v.size(); }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }

    double& operator[](size_t i) { return v[i]; }
    double operator[](size_t i) const { return v[i]; }

    bool same_shape(const GridMap& o) const { return h == o.h && w == o.w; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double min() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = x < m ? x : m;
        return m;
    }

    double max() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = x > m ? x : m;
        return m;
    }

    double mean() const {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    }
};

inline double rmse_between(const GridMap& a, const GridMap& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("rmse_between: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace radiodun

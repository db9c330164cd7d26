#include "radiodun/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace radiodun {

using nlohmann::json;

PlanKind plan_kind_from_string(const std::string& s) {
    if (s == "grid") return PlanKind::grid;
    if (s == "uniform_random") return PlanKind::uniform_random;
    throw std::invalid_argument("unknown sampling kind: " + s);
}

std::string to_string(PlanKind k) {
    return k == PlanKind::grid ? "grid" : "uniform_random";
}

namespace {

// Centered lattice coordinate: nearest integer to (2k+1)*extent/(2t), ties broken down.
// Ties-down keeps full sampling (t == extent) on exactly 0..extent-1.
int lattice_pos(int k, int t, int extent) {
    const long long num = (2LL * k + 1) * extent - t;
    return static_cast<int>((num + 2LL * t - 1) / (2LL * t));
}

}  // namespace

SamplingPlan build_plan(PlanKind kind, int n, int height, int width, uint64_t seed) {
    const long long cells = static_cast<long long>(height) * width;
    if (height < 1 || width < 1) throw std::invalid_argument("build_plan: empty grid");
    if (n < 1 || n > cells) throw std::invalid_argument("build_plan: N out of [1, H*W]");

    SamplingPlan plan;
    plan.h = height;
    plan.w = width;
    plan.kind = kind;
    plan.seed = seed;

    if (kind == PlanKind::grid) {
        const int t = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        if (static_cast<long long>(t) * t != n)
            throw std::invalid_argument("build_plan: grid kind needs a perfect-square N");
        if (t > height || t > width)
            throw std::invalid_argument("build_plan: lattice larger than grid side");
        plan.indices.reserve(n);
        for (int i = 0; i < t; ++i) {
            const int r = lattice_pos(i, t, height);
            for (int j = 0; j < t; ++j) {
                const int c = lattice_pos(j, t, width);
                plan.indices.push_back(r * width + c);
            }
        }
    } else {
        std::vector<int> all(static_cast<size_t>(cells));
        std::iota(all.begin(), all.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(all.begin(), all.end(), rng);
        plan.indices.assign(all.begin(), all.begin() + n);
    }

    std::unordered_set<int> uniq(plan.indices.begin(), plan.indices.end());
    if (static_cast<int>(uniq.size()) != n)
        throw std::logic_error("build_plan: produced duplicate indices");
    return plan;
}

SparseObservation sample(const RadioMap& map, const SamplingPlan& plan, double noise_sigma,
                         uint64_t seed) {
    if (map.values.h != plan.h || map.values.w != plan.w)
        throw std::invalid_argument("sample: plan dims do not match map");
    if (noise_sigma < 0.0) throw std::invalid_argument("sample: negative noise sigma");

    SparseObservation obs;
    obs.plan_count = plan.count();
    obs.values.reserve(plan.indices.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int idx : plan.indices) {
        double v = map.values[static_cast<size_t>(idx)];
        if (noise_sigma > 0.0) v += noise_sigma * gauss(rng);
        obs.values.push_back(v);
    }
    return obs;
}

GridMap adjoint(const std::vector<double>& y, const SamplingPlan& plan) {
    if (static_cast<int>(y.size()) != plan.count())
        throw std::invalid_argument("adjoint: observation length does not match plan");
    GridMap out(plan.h, plan.w);
    for (size_t i = 0; i < y.size(); ++i) out[static_cast<size_t>(plan.indices[i])] = y[i];
    return out;
}

std::vector<double> apply_forward(const GridMap& map, const SamplingPlan& plan) {
    if (map.h != plan.h || map.w != plan.w)
        throw std::invalid_argument("apply_forward: plan dims do not match map");
    std::vector<double> y;
    y.reserve(plan.indices.size());
    for (int idx : plan.indices) y.push_back(map[static_cast<size_t>(idx)]);
    return y;
}

std::string SamplingPlan::to_json() const {
    json j;
    j["H"] = h;
    j["W"] = w;
    j["kind"] = radiodun::to_string(kind);
    j["seed"] = seed;
    j["indices"] = indices;
    return j.dump(2);
}

SamplingPlan SamplingPlan::from_json(const std::string& text) {
    const json j = json::parse(text);
    SamplingPlan plan;
    plan.h = j.at("H").get<int>();
    plan.w = j.at("W").get<int>();
    plan.kind = plan_kind_from_string(j.at("kind").get<std::string>());
    plan.seed = j.at("seed").get<uint64_t>();
    plan.indices = j.at("indices").get<std::vector<int>>();
    const long long cells = static_cast<long long>(plan.h) * plan.w;
    std::unordered_set<int> uniq;
    for (int idx : plan.indices) {
        if (idx < 0 || idx >= cells) throw std::invalid_argument("SamplingPlan: index out of range");
        if (!uniq.insert(idx).second) throw std::invalid_argument("SamplingPlan: duplicate index");
    }
    if (plan.indices.empty()) throw std::invalid_argument("SamplingPlan: empty index set");
    return plan;
}

}  // namespace radiodun

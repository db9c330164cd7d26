#include "radiodun/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace radiodun {

GridMap FactorStack::composed() const {
    if (factors.empty()) throw std::logic_error("FactorStack: empty");
    GridMap out = factors[0];
    for (size_t i = 1; i < factors.size(); ++i) {
        if (!factors[i].same_shape(out)) throw std::invalid_argument("FactorStack: shape mismatch");
        for (size_t j = 0; j < out.size(); ++j) out[j] += factors[i][j];
    }
    if (!out.all_finite()) throw std::runtime_error("FactorStack: composed map is not finite");
    return out;
}

void FactorStack::validate() const {
    if (factors.empty()) throw std::invalid_argument("FactorStack: empty");
    for (const GridMap& f : factors)
        if (!f.same_shape(factors[0])) throw std::invalid_argument("FactorStack: shape mismatch");
}

void AOConfig::validate(int num_factors) const {
    if (beta.size() != 1 && static_cast<int>(beta.size()) != num_factors)
        throw std::invalid_argument("AOConfig: beta must broadcast or match factor count");
    for (double b : beta)
        if (!(b > 0.0) && b != 0.0) throw std::invalid_argument("AOConfig: beta must be >= 0");
    if (epsilon < 0.0) throw std::invalid_argument("AOConfig: epsilon must be >= 0");
    if (max_iters < 1) throw std::invalid_argument("AOConfig: max_iters must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("AOConfig: tol must be >= 0");
}

double soft_threshold(double z, double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("soft_threshold: negative epsilon");
    const double mag = std::abs(z) - epsilon;
    if (mag <= 0.0) return 0.0;
    return z > 0.0 ? mag : -mag;
}

GridMap soft_threshold(const GridMap& z, double epsilon) {
    if (epsilon < 0.0) throw std::invalid_argument("soft_threshold: negative epsilon");
    GridMap out(z.h, z.w);
    for (size_t i = 0; i < z.size(); ++i) out[i] = soft_threshold(z[i], epsilon);
    return out;
}

FactorStack ao_step(const FactorStack& stack, const std::vector<double>& y,
                    const SamplingPlan& plan, const AOConfig& config) {
    stack.validate();
    config.validate(stack.count());
    if (static_cast<int>(y.size()) != plan.count())
        throw std::invalid_argument("ao_step: observation length does not match plan");
    if (stack.factors[0].h != plan.h || stack.factors[0].w != plan.w)
        throw std::invalid_argument("ao_step: plan dims do not match stack");

    FactorStack next = stack;
    for (int i = 0; i < next.count(); ++i) {
        // Residual uses factors j < i already updated, l >= i from the previous sweep.
        GridMap sum = next.factors[0];
        for (int j = 1; j < next.count(); ++j)
            for (size_t p = 0; p < sum.size(); ++p) sum[p] += next.factors[j][p];

        const std::vector<double> r = apply_forward(sum, plan);
        GridMap grad(plan.h, plan.w);
        for (size_t k = 0; k < r.size(); ++k)
            grad[static_cast<size_t>(plan.indices[k])] = r[k] - y[k];

        const double beta = config.beta_for(i);
        GridMap& s = next.factors[static_cast<size_t>(i)];
        for (size_t p = 0; p < s.size(); ++p)
            s[p] = soft_threshold(s[p] - beta * grad[p], config.epsilon);
    }
    return next;
}

namespace {

double tv_value(const GridMap& x) {
    double tv = 0.0;
    for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) {
            const double gx = r + 1 < x.h ? x.at(r + 1, c) - x.at(r, c) : 0.0;
            const double gy = c + 1 < x.w ? x.at(r, c + 1) - x.at(r, c) : 0.0;
            tv += std::sqrt(gx * gx + gy * gy);
        }
    return tv;
}

double fidelity(const GridMap& x, const std::vector<double>& y, const SamplingPlan& plan) {
    double s = 0.0;
    for (size_t k = 0; k < y.size(); ++k) {
        const double d = x[static_cast<size_t>(plan.indices[k])] - y[k];
        s += d * d;
    }
    return 0.5 * s;
}

}  // namespace

GridMap tv_prox(const GridMap& x, double weight, int iters) {
    if (weight <= 0.0) return x;
    const int h = x.h, w = x.w;
    std::vector<double> px(x.size(), 0.0), py(x.size(), 0.0);
    GridMap div(h, w), u(h, w);
    const double tau = 0.125;

    for (int it = 0; it < iters; ++it) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                double d = px[static_cast<size_t>(r) * w + c] + py[static_cast<size_t>(r) * w + c];
                if (r > 0) d -= px[static_cast<size_t>(r - 1) * w + c];
                if (c > 0) d -= py[static_cast<size_t>(r) * w + c - 1];
                div.at(r, c) = d;
            }
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) u.at(r, c) = div.at(r, c) - x.at(r, c) / weight;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double gx = r + 1 < h ? u.at(r + 1, c) - u.at(r, c) : 0.0;
                const double gy = c + 1 < w ? u.at(r, c + 1) - u.at(r, c) : 0.0;
                const double denom = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
                const size_t p = static_cast<size_t>(r) * w + c;
                px[p] = (px[p] + tau * gx) / denom;
                py[p] = (py[p] + tau * gy) / denom;
            }
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double d = px[static_cast<size_t>(r) * w + c] + py[static_cast<size_t>(r) * w + c];
            if (r > 0) d -= px[static_cast<size_t>(r - 1) * w + c];
            if (c > 0) d -= py[static_cast<size_t>(r) * w + c - 1];
            u.at(r, c) = x.at(r, c) - weight * d;
        }
    return u;
}

AOResult ao_solve(const std::vector<GridMap>& prior_channels, const std::vector<double>& y,
                  const SamplingPlan& plan, const AOConfig& config) {
    if (prior_channels.empty()) throw std::invalid_argument("ao_solve: needs at least one prior channel");
    config.validate(static_cast<int>(prior_channels.size()));
    const int n = plan.count();
    if (static_cast<int>(y.size()) != n)
        throw std::invalid_argument("ao_solve: observation length does not match plan");

    // Warm start: least-squares fit of the prior channels to the observations,
    // s_i = c_i * P_i. Keeps the classical baseline free of learned components.
    const int m1 = static_cast<int>(prior_channels.size());
    Eigen::MatrixXd A(n, m1);
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < m1; ++i)
            A(k, i) = prior_channels[static_cast<size_t>(i)][static_cast<size_t>(plan.indices[k])];
        b(k) = y[static_cast<size_t>(k)];
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);

    FactorStack stack;
    for (int i = 0; i < m1; ++i) {
        GridMap s = prior_channels[static_cast<size_t>(i)];
        const double c = std::isfinite(coef(i)) ? coef(i) : 0.0;
        for (size_t p = 0; p < s.size(); ++p) s[p] *= c;
        stack.factors.push_back(std::move(s));
    }

    auto objective = [&](const GridMap& x) {
        double obj = fidelity(x, y, plan);
        if (config.prior == PriorKind::total_variation) obj += config.tv_weight * tv_value(x);
        return obj;
    };

    GridMap prev = stack.composed();
    if (config.prior == PriorKind::total_variation) prev = tv_prox(prev, config.tv_weight);
    GridMap best = prev;
    double best_obj = objective(prev);

    AOResult result;
    result.converged = false;
    int it = 0;
    for (; it < config.max_iters; ++it) {
        stack = ao_step(stack, y, plan, config);
        GridMap cur = stack.composed();
        if (config.prior == PriorKind::total_variation) cur = tv_prox(cur, config.tv_weight);

        const double obj = objective(cur);
        if (obj < best_obj) {
            best_obj = obj;
            best = cur;
        }

        double diff = 0.0, norm = 0.0;
        for (size_t p = 0; p < cur.size(); ++p) {
            const double d = cur[p] - prev[p];
            diff += d * d;
            norm += prev[p] * prev[p];
        }
        prev = cur;
        if (std::sqrt(diff) <= config.tol * std::max(std::sqrt(norm), 1e-12)) {
            result.converged = true;
            ++it;
            break;
        }
    }

    result.iterations = it;
    result.objective = best_obj;
    result.map = normalize_map(result.converged ? prev : best);
    return result;
}

}  // namespace radiodun

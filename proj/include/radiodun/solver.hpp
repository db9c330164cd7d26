#pragma once

#include <vector>

#include "radiodun/grid.hpp"
#include "radiodun/sampling.hpp"

namespace radiodun {

/// The m+1 factor maps whose elementwise sum composes the radio map.
struct FactorStack {
    std::vector<GridMap> factors;  // s_0 .. s_m

    int count() const { return static_cast<int>(factors.size()); }
    GridMap composed() const;
    void validate() const;
};

enum class PriorKind { none, total_variation };

struct AOConfig {
    std::vector<double> beta = {0.5};  // per-factor step sizes; size 1 broadcasts
    double epsilon = 1e-4;             // soft threshold
    int max_iters = 200;
    double tol = 1e-6;                 // relative change of the composed map
    PriorKind prior = PriorKind::none;
    double tv_weight = 0.1;

    double beta_for(int i) const { return beta.size() == 1 ? beta[0] : beta.at(static_cast<size_t>(i)); }
    void validate(int num_factors) const;
};

double soft_threshold(double z, double epsilon);
GridMap soft_threshold(const GridMap& z, double epsilon);

/// One alternating-optimization sweep: factors update sequentially i = 0..m, each
/// against the residual of already-updated factors, then pass through the soft
/// threshold. Pure; returns the new stack.
FactorStack ao_step(const FactorStack& stack, const std::vector<double>& y,
                    const SamplingPlan& plan, const AOConfig& config);

/// Fixed-iteration Chambolle projection for the total-variation proximal step.
GridMap tv_prox(const GridMap& x, double weight, int iters = 30);

struct AOResult {
    RadioMap map;           // composed, min-max normalized
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;  // data fidelity (+ weighted TV) of the returned iterate
};

/// Runs ao_step until max_iters or the composed map stops changing; the optional TV
/// prox smooths the composition each sweep. Non-convergence returns the best iterate
/// by objective value with converged = false. prior_channels fixes the factor count
/// and seeds the stack with a least-squares fit of the channels to the observations.
AOResult ao_solve(const std::vector<GridMap>& prior_channels, const std::vector<double>& y,
                  const SamplingPlan& plan, const AOConfig& config);

}  // namespace radiodun

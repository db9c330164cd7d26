#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radiodun/grid.hpp"
#include "radiodun/scene.hpp"

namespace radiodun {

enum class PlanKind { grid, uniform_random };

PlanKind plan_kind_from_string(const std::string& s);
std::string to_string(PlanKind k);

/// The binary sampling operator, stored as an ordered set of distinct flat row-major
/// cell indices. Never materialized as a dense matrix outside tests.
struct SamplingPlan {
    int h = 0;
    int w = 0;
    PlanKind kind = PlanKind::grid;
    uint64_t seed = 0;
    std::vector<int> indices;

    int count() const { return static_cast<int>(indices.size()); }
    double ratio() const { return static_cast<double>(indices.size()) / (static_cast<double>(h) * w); }

    std::string to_json() const;
    static SamplingPlan from_json(const std::string& text);
};

/// grid: t x t lattice at centered positions round_half_down((2k+1) * extent / (2t)),
/// which degenerates to every cell exactly once at full sampling. uniform_random: N
/// distinct indices drawn via a seeded shuffle. Deterministic per seed.
SamplingPlan build_plan(PlanKind kind, int n, int height, int width, uint64_t seed);

struct SparseObservation {
    std::vector<double> values;
    int plan_count = 0;  // redundancy check against the plan used
};

/// y_i = X[indices_i] + n_i, n_i ~ N(0, noise_sigma^2); noise_sigma 0 gives exact gathers.
SparseObservation sample(const RadioMap& map, const SamplingPlan& plan, double noise_sigma,
                         uint64_t seed);

/// Scatters observations back to their cells, zeros elsewhere.
GridMap adjoint(const std::vector<double>& y, const SamplingPlan& plan);

/// Noise-free gather used inside solver iterations.
std::vector<double> apply_forward(const GridMap& map, const SamplingPlan& plan);

}  // namespace radiodun

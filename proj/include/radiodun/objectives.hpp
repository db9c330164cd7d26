#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "radiodun/grid.hpp"

namespace radiodun {

/// Least-squares fit of the log-distance propagation model to a map.
struct PhysFit {
    double alpha = 0.0;
    double eta = 0.0;
    double sigma_delta = 0.0;
};

/// Fits (alpha, eta) minimizing sum((E - alpha*F - eta)^2) over all cells, with
/// E = X - I and F = 10*log10(d), d clamped to >= 1 cell; sigma_delta is the RMS
/// residual. Rejects degenerate all-equal F.
PhysFit fit_phys(const GridMap& x, int tx_x, int tx_y, double tx_strength);

/// mean((Xs - mean(Xs))^2) + mean((Xgt - Xhat + Xs - mean(Xs))^2).
double shadowing_loss(const GridMap& x_sigma, const GridMap& x_gt, const GridMap& x_hat);

/// shadowing_loss + mu * mean((Xgt - Xhat)^2).
double total_loss(const GridMap& x_gt, const GridMap& x_hat, const GridMap& x_sigma, double mu);

double mse(const GridMap& a, const GridMap& b);

/// Pooled over all cells of all pairs.
double rmse(const std::vector<GridMap>& x_gt, const std::vector<GridMap>& x_hat);
double rmse(const GridMap& x_gt, const GridMap& x_hat);

/// Global single-window structural similarity with C1 = 1e-4, C2 = 9e-4 (dynamic
/// range 1 for [0,1]-normalized maps). Population statistics over the whole map.
double ssim(const GridMap& x_gt, const GridMap& x_hat);

/// 10*log10(C_M^2 / MSE) with C_M = 1; +inf sentinel when MSE = 0.
double psnr(const std::vector<GridMap>& x_gt, const std::vector<GridMap>& x_hat);
double psnr(const GridMap& x_gt, const GridMap& x_hat);

/// |rmse_all - rmse_reduced| / rmse_all * 100.
double dec_percent(double rmse_all, double rmse_reduced);

constexpr double kPsnrInf = std::numeric_limits<double>::infinity();

/// One evaluation run, serializable to JSON and to a stable CSV row.
struct EvalReport {
    std::string method;
    std::string dataset_id;
    bool tx_known = true;
    int n_samples = 0;
    double rmse = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
    std::optional<double> dec_percent;
    std::string checkpoint_id;
    uint64_t seed = 0;
    int n_maps = 0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);

    static std::string csv_header();
    std::string csv_row() const;
    /// Creates the file with a header when absent, then appends one row.
    void append_csv(const std::string& path) const;
};

}  // namespace radiodun

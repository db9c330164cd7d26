#include "radiodun/objectives.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace radiodun {

using nlohmann::json;

PhysFit fit_phys(const GridMap& x, int tx_x, int tx_y, double tx_strength) {
    if (x.size() < 2) throw std::invalid_argument("fit_phys: grid too small");
    if (!x.all_finite()) throw std::invalid_argument("fit_phys: non-finite map");

    const size_t n = x.size();
    std::vector<double> f(n), e(n);
    for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) {
            const double dx = static_cast<double>(tx_x - (r + 1));
            const double dy = static_cast<double>(tx_y - (c + 1));
            const double d = std::max(1.0, std::sqrt(dx * dx + dy * dy));
            const size_t p = static_cast<size_t>(r) * x.w + c;
            f[p] = 10.0 * std::log10(d);
            e[p] = x[p] - tx_strength;
        }

    double mf = 0.0, me = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mf += f[i];
        me += e[i];
    }
    mf /= static_cast<double>(n);
    me /= static_cast<double>(n);

    double sff = 0.0, sfe = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sff += (f[i] - mf) * (f[i] - mf);
        sfe += (f[i] - mf) * (e[i] - me);
    }
    if (sff <= 0.0) throw std::invalid_argument("fit_phys: degenerate regression, all distances equal");

    PhysFit fit;
    fit.alpha = sfe / sff;
    fit.eta = me - fit.alpha * mf;
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = e[i] - fit.alpha * f[i] - fit.eta;
        ss += r * r;
    }
    fit.sigma_delta = std::sqrt(ss / static_cast<double>(n));
    return fit;
}

double shadowing_loss(const GridMap& x_sigma, const GridMap& x_gt, const GridMap& x_hat) {
    if (!x_sigma.same_shape(x_gt) || !x_gt.same_shape(x_hat))
        throw std::invalid_argument("shadowing_loss: shape mismatch");
    const double ms = x_sigma.mean();
    double t1 = 0.0, t2 = 0.0;
    for (size_t i = 0; i < x_sigma.size(); ++i) {
        const double centered = x_sigma[i] - ms;
        t1 += centered * centered;
        const double r = x_gt[i] - x_hat[i] + centered;
        t2 += r * r;
    }
    const double n = static_cast<double>(x_sigma.size());
    return t1 / n + t2 / n;
}

double total_loss(const GridMap& x_gt, const GridMap& x_hat, const GridMap& x_sigma, double mu) {
    if (mu < 0.0) throw std::invalid_argument("total_loss: mu must be >= 0");
    return shadowing_loss(x_sigma, x_gt, x_hat) + mu * mse(x_gt, x_hat);
}

double mse(const GridMap& a, const GridMap& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double rmse(const GridMap& x_gt, const GridMap& x_hat) { return std::sqrt(mse(x_gt, x_hat)); }

double rmse(const std::vector<GridMap>& x_gt, const std::vector<GridMap>& x_hat) {
    if (x_gt.size() != x_hat.size() || x_gt.empty())
        throw std::invalid_argument("rmse: set sizes differ or empty");
    double s = 0.0;
    size_t cells = 0;
    for (size_t i = 0; i < x_gt.size(); ++i) {
        if (!x_gt[i].same_shape(x_hat[i])) throw std::invalid_argument("rmse: shape mismatch");
        for (size_t p = 0; p < x_gt[i].size(); ++p) {
            const double d = x_gt[i][p] - x_hat[i][p];
            s += d * d;
        }
        cells += x_gt[i].size();
    }
    return std::sqrt(s / static_cast<double>(cells));
}

double ssim(const GridMap& x_gt, const GridMap& x_hat) {
    if (!x_gt.same_shape(x_hat)) throw std::invalid_argument("ssim: shape mismatch");
    constexpr double c1 = 1e-4;  // (0.01 * L)^2, L = 1
    constexpr double c2 = 9e-4;  // (0.03 * L)^2
    const double n = static_cast<double>(x_gt.size());
    const double mg = x_gt.mean();
    const double mr = x_hat.mean();
    double vg = 0.0, vr = 0.0, cov = 0.0;
    for (size_t i = 0; i < x_gt.size(); ++i) {
        const double a = x_gt[i] - mg;
        const double b = x_hat[i] - mr;
        vg += a * a;
        vr += b * b;
        cov += a * b;
    }
    vg /= n;
    vr /= n;
    cov /= n;
    return ((2.0 * mg * mr + c1) * (2.0 * cov + c2)) /
           ((mg * mg + mr * mr + c1) * (vg + vr + c2));
}

namespace {

double pooled_mse(const std::vector<GridMap>& x_gt, const std::vector<GridMap>& x_hat) {
    double s = 0.0;
    size_t cells = 0;
    for (size_t i = 0; i < x_gt.size(); ++i) {
        s += mse(x_gt[i], x_hat[i]) * static_cast<double>(x_gt[i].size());
        cells += x_gt[i].size();
    }
    return s / static_cast<double>(cells);
}

}  // namespace

double psnr(const GridMap& x_gt, const GridMap& x_hat) {
    const double m = mse(x_gt, x_hat);
    if (m == 0.0) return kPsnrInf;
    return 10.0 * std::log10(1.0 / m);
}

double psnr(const std::vector<GridMap>& x_gt, const std::vector<GridMap>& x_hat) {
    if (x_gt.size() != x_hat.size() || x_gt.empty())
        throw std::invalid_argument("psnr: set sizes differ or empty");
    const double m = pooled_mse(x_gt, x_hat);
    if (m == 0.0) return kPsnrInf;
    return 10.0 * std::log10(1.0 / m);
}

double dec_percent(double rmse_all, double rmse_reduced) {
    if (!(rmse_all > 0.0)) throw std::invalid_argument("dec_percent: rmse_all must be > 0");
    return std::abs(rmse_all - rmse_reduced) / rmse_all * 100.0;
}

std::string EvalReport::to_json() const {
    json j;
    j["method"] = method;
    j["dataset"] = dataset_id;
    j["tx_known"] = tx_known;
    j["n_samples"] = n_samples;
    j["rmse"] = rmse;
    j["ssim"] = ssim;
    j["psnr"] = std::isinf(psnr) ? json("inf") : json(psnr);
    if (dec_percent) j["dec_percent"] = *dec_percent;
    j["checkpoint"] = checkpoint_id;
    j["seed"] = seed;
    j["n_maps"] = n_maps;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    const json j = json::parse(text);
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.dataset_id = j.at("dataset").get<std::string>();
    r.tx_known = j.at("tx_known").get<bool>();
    r.n_samples = j.at("n_samples").get<int>();
    r.rmse = j.at("rmse").get<double>();
    r.ssim = j.at("ssim").get<double>();
    r.psnr = j.at("psnr").is_string() ? kPsnrInf : j.at("psnr").get<double>();
    if (j.contains("dec_percent")) r.dec_percent = j.at("dec_percent").get<double>();
    r.checkpoint_id = j.value("checkpoint", "");
    r.seed = j.value("seed", uint64_t{0});
    r.n_maps = j.value("n_maps", 0);
    return r;
}

std::string EvalReport::csv_header() { return "method,dataset,tx_known,n_samples,rmse,ssim,psnr"; }

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << method << "," << dataset_id << "," << (tx_known ? 1 : 0) << "," << n_samples << ","
       << rmse << "," << ssim << ",";
    if (std::isinf(psnr))
        os << "inf";
    else
        os << psnr;
    return os.str();
}

void EvalReport::append_csv(const std::string& path) const {
    namespace fs = std::filesystem;
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + path);
    if (fresh) out << csv_header() << "\n";
    out << csv_row() << "\n";
}

}  // namespace radiodun

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "radiodun/checkpoint.hpp"
#include "radiodun/dataset.hpp"
#include "radiodun/harness.hpp"
#include "radiodun/model.hpp"
#include "radiodun/objectives.hpp"
#include "radiodun/sampling.hpp"
#include "radiodun/scene.hpp"
#include "radiodun/solver.hpp"

namespace py = pybind11;
using namespace radiodun;

namespace {

py::array_t<double> to_array(const GridMap& g) {
    py::array_t<double> a({g.h, g.w});
    std::memcpy(a.mutable_data(), g.v.data(), g.size() * sizeof(double));
    return a;
}

GridMap to_grid(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    GridMap g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::memcpy(g.v.data(), a.data(), g.size() * sizeof(double));
    return g;
}

std::vector<GridMap> to_grids(const std::vector<py::array_t<double>>& arrays) {
    std::vector<GridMap> out;
    out.reserve(arrays.size());
    for (const auto& a : arrays) out.push_back(to_grid(a));
    return out;
}

/// {B,1,H,W} tensor -> (B, H, W) array.
py::array_t<double> batch_to_array(const nn::Tensor& t) {
    const nn::Shape& s = t.shape();
    py::array_t<double> a({s.n, s.h, s.w});
    std::memcpy(a.mutable_data(), t.value().data(), s.numel() * sizeof(double));
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "radio map reconstruction: scenes, sampling, solvers, model, harness";

    // ---- scenes and physics ----
    py::class_<SceneGrid>(m, "SceneGrid")
        .def(py::init<>())
        .def_readwrite("h", &SceneGrid::h)
        .def_readwrite("w", &SceneGrid::w)
        .def_readwrite("tx_x", &SceneGrid::tx_x)
        .def_readwrite("tx_y", &SceneGrid::tx_y)
        .def_readwrite("tx_known", &SceneGrid::tx_known)
        .def_readwrite("tx_strength", &SceneGrid::tx_strength)
        .def_property(
            "obstacle_maps",
            [](const SceneGrid& s) {
                std::vector<py::array_t<double>> out;
                for (const GridMap& g : s.obstacle_maps) out.push_back(to_array(g));
                return out;
            },
            [](SceneGrid& s, const std::vector<py::array_t<double>>& maps) {
                s.obstacle_maps = to_grids(maps);
            })
        .def("validate", &SceneGrid::validate);

    m.def("distance_map",
          [](int tx_x, int tx_y, int h, int w) { return to_array(distance_map(tx_x, tx_y, h, w)); },
          py::arg("tx_x"), py::arg("tx_y"), py::arg("h"), py::arg("w"));
    m.def("obstruction_count", &obstruction_count, py::arg("scene"), py::arg("rx_x"),
          py::arg("rx_y"));
    m.def("synth_radio_map",
          [](const SceneGrid& s, double alpha, double eta, double sigma_delta, uint64_t seed) {
              return to_array(synth_radio_map(s, alpha, eta, sigma_delta, seed).values);
          },
          py::arg("scene"), py::arg("alpha") = 2.0, py::arg("eta") = 0.5,
          py::arg("sigma_delta") = 0.05, py::arg("seed") = 0);
    m.def("synth_radio_map_raw",
          [](const SceneGrid& s, double alpha, double eta, double sigma_delta, uint64_t seed) {
              return to_array(synth_radio_map_raw(s, alpha, eta, sigma_delta, seed));
          },
          py::arg("scene"), py::arg("alpha") = 2.0, py::arg("eta") = 0.5,
          py::arg("sigma_delta") = 0.05, py::arg("seed") = 0);
    m.def("fit_phys",
          [](const py::array_t<double>& x, int tx_x, int tx_y, double tx_strength) {
              const PhysFit f = fit_phys(to_grid(x), tx_x, tx_y, tx_strength);
              return py::make_tuple(f.alpha, f.eta, f.sigma_delta);
          },
          py::arg("x"), py::arg("tx_x"), py::arg("tx_y"), py::arg("tx_strength") = 1.0);

    // ---- sampling operator ----
    py::class_<SamplingPlan>(m, "SamplingPlan")
        .def(py::init<>())
        .def_readwrite("h", &SamplingPlan::h)
        .def_readwrite("w", &SamplingPlan::w)
        .def_readwrite("seed", &SamplingPlan::seed)
        .def_readwrite("indices", &SamplingPlan::indices)
        .def_property(
            "kind", [](const SamplingPlan& p) { return to_string(p.kind); },
            [](SamplingPlan& p, const std::string& s) { p.kind = plan_kind_from_string(s); })
        .def("count", &SamplingPlan::count)
        .def("ratio", &SamplingPlan::ratio)
        .def("to_json", &SamplingPlan::to_json)
        .def_static("from_json", &SamplingPlan::from_json);

    m.def("build_plan",
          [](const std::string& kind, int n, int h, int w, uint64_t seed) {
              return build_plan(plan_kind_from_string(kind), n, h, w, seed);
          },
          py::arg("kind"), py::arg("n"), py::arg("h"), py::arg("w"), py::arg("seed") = 0);
    m.def("sample",
          [](const py::array_t<double>& map, const SamplingPlan& plan, double noise_sigma,
             uint64_t seed) {
              RadioMap rm{to_grid(map), false};
              return sample(rm, plan, noise_sigma, seed).values;
          },
          py::arg("map"), py::arg("plan"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
    m.def("adjoint",
          [](const std::vector<double>& y, const SamplingPlan& plan) {
              return to_array(adjoint(y, plan));
          },
          py::arg("y"), py::arg("plan"));

    // ---- classical solver ----
    m.def("ao_solve",
          [](const std::vector<py::array_t<double>>& priors, const std::vector<double>& y,
             const SamplingPlan& plan, std::vector<double> beta, double epsilon, int max_iters,
             double tol, const std::string& prior, double tv_weight) {
              AOConfig cfg;
              cfg.beta = std::move(beta);
              cfg.epsilon = epsilon;
              cfg.max_iters = max_iters;
              cfg.tol = tol;
              cfg.prior = prior == "tv" ? PriorKind::total_variation : PriorKind::none;
              cfg.tv_weight = tv_weight;
              const AOResult r = ao_solve(to_grids(priors), y, plan, cfg);
              py::dict out;
              out["map"] = to_array(r.map.values);
              out["iterations"] = r.iterations;
              out["converged"] = r.converged;
              out["objective"] = r.objective;
              return out;
          },
          py::arg("priors"), py::arg("y"), py::arg("plan"),
          py::arg("beta") = std::vector<double>{0.5}, py::arg("epsilon") = 1e-4,
          py::arg("max_iters") = 200, py::arg("tol") = 1e-6, py::arg("prior") = "none",
          py::arg("tv_weight") = 0.1);

    // ---- metrics and losses ----
    m.def("mse", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return mse(to_grid(a), to_grid(b));
    });
    m.def("rmse", [](const std::vector<py::array_t<double>>& gt,
                     const std::vector<py::array_t<double>>& hat) {
        return rmse(to_grids(gt), to_grids(hat));
    });
    m.def("ssim", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return ssim(to_grid(a), to_grid(b));
    });
    m.def("psnr", [](const std::vector<py::array_t<double>>& gt,
                     const std::vector<py::array_t<double>>& hat) {
        return psnr(to_grids(gt), to_grids(hat));
    });
    m.def("dec_percent", &dec_percent, py::arg("rmse_all"), py::arg("rmse_reduced"));
    m.def("shadowing_loss",
          [](const py::array_t<double>& x_sigma, const py::array_t<double>& gt,
             const py::array_t<double>& hat) {
              return shadowing_loss(to_grid(x_sigma), to_grid(gt), to_grid(hat));
          },
          py::arg("x_sigma"), py::arg("x_gt"), py::arg("x_hat"));
    m.def("total_loss",
          [](const py::array_t<double>& gt, const py::array_t<double>& hat,
             const py::array_t<double>& x_sigma, double mu) {
              return total_loss(to_grid(gt), to_grid(hat), to_grid(x_sigma), mu);
          },
          py::arg("x_gt"), py::arg("x_hat"), py::arg("x_sigma"), py::arg("mu") = 1.0);

    // ---- model ----
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("K", &ModelConfig::K)
        .def_readwrite("C", &ModelConfig::C)
        .def_readwrite("m", &ModelConfig::m)
        .def_readwrite("unet_depth", &ModelConfig::unet_depth)
        .def_readwrite("base_channels", &ModelConfig::base_channels)
        .def_readwrite("H", &ModelConfig::H)
        .def_readwrite("W", &ModelConfig::W)
        .def_readwrite("drm_counterpart", &ModelConfig::drm_counterpart)
        .def("validate", &ModelConfig::validate)
        .def("to_json", &ModelConfig::to_json)
        .def_static("from_json", &ModelConfig::from_json);

    py::class_<ModelInput>(m, "ModelInput")
        .def(py::init<>())
        .def_readwrite("y", &ModelInput::y)
        .def_readwrite("plan", &ModelInput::plan)
        .def_property(
            "priors",
            [](const ModelInput& in) {
                std::vector<py::array_t<double>> out;
                for (const GridMap& g : in.priors) out.push_back(to_array(g));
                return out;
            },
            [](ModelInput& in, const std::vector<py::array_t<double>>& priors) {
                in.priors = to_grids(priors);
            });

    py::class_<RadioDUN>(m, "RadioDUN")
        .def(py::init<ModelConfig, uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def_static("from_checkpoint",
                    [](const std::string& path) {
                        return model_from_checkpoint(Checkpoint::load(path));
                    })
        .def_property_readonly("config", &RadioDUN::config)
        .def("set_train", &RadioDUN::set_train)
        .def("set_gdm_scalars", &RadioDUN::set_gdm_scalars, py::arg("block"), py::arg("beta"),
             py::arg("eps"))
        .def("gdm_betas", &RadioDUN::gdm_betas)
        .def("gdm_epsilon", &RadioDUN::gdm_epsilon)
        .def("forward", [](const RadioDUN& model, const std::vector<ModelInput>& batch) {
            const ForwardResult r = model.forward(batch);
            py::dict out;
            out["x_hat"] = batch_to_array(r.x_hat);
            out["x_sigma"] = batch_to_array(r.x_sigma);
            std::vector<py::array_t<double>> hist, factors;
            for (const nn::Tensor& t : r.history) hist.push_back(batch_to_array(t));
            for (const nn::Tensor& t : r.factors) factors.push_back(batch_to_array(t));
            out["history"] = hist;
            out["factors"] = factors;
            return out;
        });

    // ---- datasets ----
    py::class_<Example>(m, "Example")
        .def_readonly("scene", &Example::scene)
        .def_readonly("city", &Example::city)
        .def_readonly("tx_index", &Example::tx_index)
        .def_property_readonly("map", [](const Example& e) { return to_array(e.map.values); });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("examples", &Dataset::examples)
        .def_readonly("train", &Dataset::train)
        .def_readonly("val", &Dataset::val)
        .def_readonly("test", &Dataset::test)
        .def_readonly("warnings", &Dataset::warnings);

    m.def("build_dataset",
          [](const std::string& spec_json) { return build_dataset(DatasetSpec::from_json(spec_json)); },
          py::arg("spec_json"));
    m.def("make_input",
          [](const Example& e, const std::string& spec_json, uint64_t salt) {
              return make_input(e, DatasetSpec::from_json(spec_json), salt);
          },
          py::arg("example"), py::arg("spec_json"), py::arg("salt") = 0);

    // ---- training and evaluation harness (JSON-configured, like the CLI) ----
    m.def("train",
          [](const std::string& run_json, const std::string& data_json) {
              const TrainResult r = train(RunConfig::from_json(run_json),
                                          DatasetSpec::from_json(data_json));
              py::dict out;
              out["best_checkpoint"] = r.best_checkpoint;
              out["last_checkpoint"] = r.last_checkpoint;
              out["log_path"] = r.log_path;
              out["epochs_run"] = r.epochs_run;
              out["final_train_mse"] = r.final_train_mse;
              out["best_val_rmse"] = r.best_val_rmse;
              return out;
          },
          py::arg("run_json"), py::arg("data_json"));
    m.def("evaluate",
          [](const std::string& checkpoint, const std::string& data_json, const std::string& split,
             const std::string& method, bool panels, int panel_count, const std::string& out_dir) {
              EvalOptions opt{split, method, panels, panel_count};
              return evaluate(checkpoint, DatasetSpec::from_json(data_json), opt, out_dir).to_json();
          },
          py::arg("checkpoint"), py::arg("data_json"), py::arg("split") = "test",
          py::arg("method") = "radiodun", py::arg("panels") = false, py::arg("panel_count") = 4,
          py::arg("out_dir") = "out");
    m.def("baseline_evaluate",
          [](const std::string& data_json, const std::string& split, const std::string& out_dir) {
              EvalOptions opt;
              opt.split = split;
              opt.method = "baseline";
              return baseline_evaluate(DatasetSpec::from_json(data_json), AOConfig{}, opt, out_dir)
                  .to_json();
          },
          py::arg("data_json"), py::arg("split") = "test", py::arg("out_dir") = "out");
    m.def("transfer",
          [](const std::string& run_json, const std::string& target_json) {
              const TransferResult r =
                  transfer(RunConfig::from_json(run_json), DatasetSpec::from_json(target_json));
              py::dict out;
              out["checkpoint"] = r.checkpoint;
              out["zero_shot"] = r.zero_shot.to_json();
              out["report"] = r.report.to_json();
              return out;
          },
          py::arg("run_json"), py::arg("target_json"));
}

// Command-line front end: synth | train | eval | transfer | baseline | plot.
// One JSON config file ({"run": {...}, "data": {...}}) drives every subcommand;
// individual flags override fields of that file.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "radiodun/harness.hpp"

namespace fs = std::filesystem;
using namespace radiodun;

namespace {

struct Shared {
    std::string config;
    std::string out_dir;
    uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    RunConfig run;
    DatasetSpec data;

    /// Loads the config file (when given) and applies the universal overrides.
    void resolve() {
        if (!config.empty()) {
            std::ifstream is(config);
            if (!is) throw std::runtime_error("cannot open config file: " + config);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(is);
            } catch (const std::exception& ex) {
                throw std::runtime_error("config file " + config + ": " + ex.what());
            }
            if (j.contains("run")) run = RunConfig::from_json(j.at("run").dump());
            if (j.contains("data")) data = DatasetSpec::from_json(j.at("data").dump());
        }
        if (seed_opt && seed_opt->count()) {
            run.seed = seed;
            data.seed = seed;
        }
        if (out_opt && out_opt->count()) run.out_dir = out_dir;
    }
};

/// --config/--seed/--out-dir are accepted by every subcommand.
void add_universal(CLI::App* cmd, Shared& sh) {
    cmd->add_option("--config", sh.config, "JSON config file with 'run' and 'data' sections");
    sh.seed_opt = cmd->add_option("--seed", sh.seed, "override run and data seeds");
    sh.out_opt = cmd->add_option("--out-dir", sh.out_dir, "output tree root");
}

void print_report(const EvalReport& rep) {
    std::cout << rep.method << " on " << rep.dataset_id << " (" << rep.n_maps
              << " maps, N=" << rep.n_samples << "):"
              << " rmse=" << rep.rmse << " ssim=" << rep.ssim << " psnr=" << rep.psnr << "\n";
}

int cmd_synth(Shared& sh, int count_override, CLI::Option* count_opt) {
    sh.resolve();
    sh.data.source = DatasetSource::synthetic;
    if (count_opt->count()) sh.data.synth.count = count_override;
    sh.data.validate();

    const Dataset ds = make_synthetic(sh.data);
    const fs::path dir = fs::path(sh.run.out_dir) / "dataset";
    fs::create_directories(dir);

    SceneMeta meta;
    meta.alpha = sh.data.synth.alpha;
    meta.eta = sh.data.synth.eta;
    meta.sigma_delta = sh.data.synth.sigma_delta;
    meta.seed = sh.data.seed;

    nlohmann::json manifest;
    manifest["spec"] = nlohmann::json::parse(sh.data.to_json());
    manifest["stems"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.examples.size(); ++i) {
        std::ostringstream stem;
        stem << "scene_" << std::setw(5) << std::setfill('0') << i;
        write_scene(dir.string(), stem.str(), ds.examples[i].scene, ds.examples[i].map, meta);
        manifest["stems"].push_back(stem.str());
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
    std::cout << "wrote " << ds.examples.size() << " scenes to " << dir.string() << "\n";
    return 0;
}

/// The caller resolves the config and applies flag overrides first.
int cmd_train(Shared& sh) {
    const TrainResult res = train(sh.run, sh.data);
    const EpochLog& last = res.history.back();
    std::cout << "trained " << res.epochs_run << " epoch(s): train_loss=" << last.train_loss
              << " train_mse=" << last.train_mse << " val_rmse=" << last.val_rmse << "\n"
              << "best checkpoint: " << res.best_checkpoint << "\n"
              << "last checkpoint: " << res.last_checkpoint << "\n"
              << "log: " << res.log_path << "\n";
    return 0;
}

int cmd_eval(Shared& sh, const std::string& checkpoint, const EvalOptions& opt) {
    sh.resolve();
    const EvalReport rep = evaluate(checkpoint, sh.data, opt, sh.run.out_dir);
    print_report(rep);
    return 0;
}

int cmd_baseline(Shared& sh, const EvalOptions& opt, const AOConfig& cfg) {
    sh.resolve();
    const EvalReport rep = baseline_evaluate(sh.data, cfg, opt, sh.run.out_dir);
    print_report(rep);
    return 0;
}

int cmd_transfer(Shared& sh, const std::string& checkpoint, double fraction,
                 CLI::Option* frac_opt, int epochs, CLI::Option* ep_opt) {
    sh.resolve();
    sh.run.source_checkpoint = checkpoint;
    if (frac_opt->count()) sh.run.transfer_fraction = fraction;
    if (ep_opt->count()) sh.run.transfer_epochs = epochs;
    sh.run.validate();

    const TransferResult res = transfer(sh.run, sh.data);
    print_report(res.zero_shot);
    print_report(res.report);
    std::cout << "transfer checkpoint: " << res.checkpoint << "\n";
    return 0;
}

int cmd_plot(Shared& sh, const std::string& checkpoint, const std::string& split, int count) {
    sh.resolve();
    EvalOptions opt;
    opt.split = split;
    opt.method = "plot";
    opt.panels = true;
    opt.panel_count = count;
    const EvalReport rep = evaluate(checkpoint, sh.data, opt, sh.run.out_dir);
    print_report(rep);
    std::cout << "panels under " << sh.run.out_dir << "/plots\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"radio map reconstruction: unfolding network and classical solver"};
    app.require_subcommand(1);
    int rc = 0;

    // synth -------------------------------------------------------------
    Shared synth_sh;
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene/map corpus");
    add_universal(synth, synth_sh);
    int synth_count = 0;
    auto* synth_count_opt = synth->add_option("--count", synth_count, "number of scenes");
    synth->callback([&] { rc = cmd_synth(synth_sh, synth_count, synth_count_opt); });

    // train -------------------------------------------------------------
    Shared train_sh;
    auto* train_cmd = app.add_subcommand("train", "train the unfolding network");
    add_universal(train_cmd, train_sh);
    int epochs = 0, batch = 0, epoch_limit = 0;
    double lr = 0.0, mu = 0.0;
    std::string resume;
    auto* epochs_opt = train_cmd->add_option("--epochs", epochs, "total epochs");
    auto* batch_opt = train_cmd->add_option("--batch", batch, "batch size");
    auto* limit_opt =
        train_cmd->add_option("--epoch-limit", epoch_limit, "stop this call after N epochs");
    auto* lr_opt = train_cmd->add_option("--lr", lr, "peak learning rate");
    auto* mu_opt = train_cmd->add_option("--mu", mu, "MSE weight in the total loss");
    auto* resume_opt = train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    auto* mse_only_opt =
        train_cmd->add_flag("--mse-only", "train on plain MSE without the shadowing term");
    train_cmd->callback([&] {
        train_sh.resolve();
        if (epochs_opt->count()) train_sh.run.epochs = epochs;
        if (batch_opt->count()) train_sh.run.batch_size = batch;
        if (limit_opt->count()) train_sh.run.epoch_limit = epoch_limit;
        if (lr_opt->count()) train_sh.run.lr = lr;
        if (mu_opt->count()) train_sh.run.mu = mu;
        if (resume_opt->count()) train_sh.run.resume_from = resume;
        if (mse_only_opt->count()) train_sh.run.mse_only = true;
        train_sh.run.validate();
        rc = cmd_train(train_sh);
    });

    // eval --------------------------------------------------------------
    Shared eval_sh;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_universal(eval_cmd, eval_sh);
    std::string eval_ckpt, eval_split = "test", eval_method = "radiodun";
    bool eval_panels = false;
    int eval_panel_count = 4;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--split", eval_split, "train|val|test");
    eval_cmd->add_option("--method", eval_method, "method label for the report");
    eval_cmd->add_flag("--panels", eval_panels, "render prediction/gt/error images");
    eval_cmd->add_option("--panel-count", eval_panel_count, "panels to render");
    eval_cmd->callback([&] {
        EvalOptions opt;
        opt.split = eval_split;
        opt.method = eval_method;
        opt.panels = eval_panels;
        opt.panel_count = eval_panel_count;
        rc = cmd_eval(eval_sh, eval_ckpt, opt);
    });

    // baseline ----------------------------------------------------------
    Shared base_sh;
    auto* base_cmd = app.add_subcommand("baseline", "classical alternating-optimization solver");
    add_universal(base_cmd, base_sh);
    std::string base_split = "test";
    AOConfig ao;
    std::string prior = "none";
    base_cmd->add_option("--split", base_split, "train|val|test");
    base_cmd->add_option("--max-iters", ao.max_iters, "solver sweeps");
    base_cmd->add_option("--epsilon", ao.epsilon, "soft threshold");
    base_cmd->add_option("--tv-weight", ao.tv_weight, "total-variation weight");
    base_cmd->add_option("--prior", prior, "none|tv");
    base_cmd->callback([&] {
        if (prior == "tv")
            ao.prior = PriorKind::total_variation;
        else if (prior != "none")
            throw CLI::ValidationError("--prior", "must be 'none' or 'tv'");
        EvalOptions opt;
        opt.split = base_split;
        opt.method = "baseline";
        rc = cmd_baseline(base_sh, opt, ao);
    });

    // transfer ------------------------------------------------------------
    Shared tr_sh;
    auto* tr_cmd = app.add_subcommand("transfer", "zero-shot or fine-tuned domain transfer");
    add_universal(tr_cmd, tr_sh);
    std::string tr_ckpt;
    double tr_fraction = 0.0;
    int tr_epochs = 0;
    tr_cmd->add_option("--checkpoint", tr_ckpt, "source checkpoint")->required();
    auto* frac_opt =
        tr_cmd->add_option("--fraction", tr_fraction, "share of target train data (0 = zero-shot)");
    auto* trep_opt = tr_cmd->add_option("--epochs", tr_epochs, "fine-tuning epochs");
    tr_cmd->callback(
        [&] { rc = cmd_transfer(tr_sh, tr_ckpt, tr_fraction, frac_opt, tr_epochs, trep_opt); });

    // plot ----------------------------------------------------------------
    Shared plot_sh;
    auto* plot_cmd = app.add_subcommand("plot", "render prediction/gt/error panels");
    add_universal(plot_cmd, plot_sh);
    std::string plot_ckpt, plot_split = "test";
    int plot_count = 4;
    plot_cmd->add_option("--checkpoint", plot_ckpt, "trained checkpoint")->required();
    plot_cmd->add_option("--split", plot_split, "train|val|test");
    plot_cmd->add_option("--count", plot_count, "maps to render");
    plot_cmd->callback([&] { rc = cmd_plot(plot_sh, plot_ckpt, plot_split, plot_count); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return rc;
}

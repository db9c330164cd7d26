#include "radiodun/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "radiodun/nn/optim.hpp"

namespace fs = std::filesystem;

namespace radiodun {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// The model's grid/channel contract against the first example of the dataset.
void check_compatibility(const ModelConfig& mc, const Dataset& ds) {
    if (ds.examples.empty()) throw std::runtime_error("dataset is empty");
    const Example& e = ds.examples.front();
    if (e.scene.h != mc.H || e.scene.w != mc.W)
        throw std::runtime_error("model grid " + std::to_string(mc.H) + "x" + std::to_string(mc.W) +
                                 " does not match dataset " + std::to_string(e.scene.h) + "x" +
                                 std::to_string(e.scene.w));
    if (e.scene.num_obstacle_channels() != mc.m)
        throw std::runtime_error("model m=" + std::to_string(mc.m) + " does not match dataset's " +
                                 std::to_string(e.scene.num_obstacle_channels()) +
                                 " obstacle channels");
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream oss;
    oss << rng;
    return oss.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
    std::mt19937_64 rng;
    std::istringstream iss(s);
    iss >> rng;
    if (!iss) throw std::runtime_error("checkpoint: corrupt rng state");
    return rng;
}

double mse_of_values(const nn::Tensor& gt, const nn::Tensor& hat) {
    return (gt.value() - hat.value()).square().mean();
}

/// Pooled/averaged metrics of a prediction set, written into a report skeleton.
EvalReport aggregate_report(const std::vector<GridMap>& gts, const std::vector<GridMap>& hats) {
    EvalReport rep;
    rep.rmse = rmse(gts, hats);
    double s = 0.0;
    for (size_t i = 0; i < gts.size(); ++i) s += ssim(gts[i], hats[i]);
    rep.ssim = s / static_cast<double>(gts.size());
    rep.psnr = psnr(gts, hats);
    rep.n_maps = static_cast<int>(gts.size());
    return rep;
}

GridMap clamp01(GridMap g) {
    for (double& x : g.v) x = std::min(1.0, std::max(0.0, x));
    return g;
}

void render_panels(const std::string& plots_dir, const std::string& tag, int index,
                   const GridMap& gt, const GridMap& hat) {
    GridMap err(gt.h, gt.w);
    for (size_t i = 0; i < err.size(); ++i) err[i] = std::abs(gt[i] - hat[i]);
    const std::string stem = plots_dir + "/" + tag + "_" + std::to_string(index);
    write_gray(stem + "_gt.png", quantize_map(clamp01(gt)));
    write_gray(stem + "_pred.png", quantize_map(clamp01(hat)));
    write_gray(stem + "_err.png", quantize_map(clamp01(err)));
}

/// Validation metrics at fixed plans (salt 0). Falls back to the train split for
/// runs configured without a validation split.
EvalReport validation_report(const RadioDUN& model, const Dataset& ds, const DatasetSpec& data) {
    const std::vector<size_t>& idx = ds.val.empty() ? ds.train : ds.val;
    std::vector<GridMap> gts, hats;
    for (size_t i : idx) {
        const Example& e = ds.examples[i];
        ForwardResult r = model.forward({make_input(e, data, 0)});
        gts.push_back(e.map.values);
        hats.push_back(grid_from_batch(r.x_hat, 0));
    }
    return aggregate_report(gts, hats);
}

void append_epoch_log(const std::string& path, const EpochLog& row) {
    const bool fresh = !fs::exists(path);
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot open log " + path);
    if (fresh) os << "epoch,lr,train_loss,train_mse,val_rmse,val_ssim,val_psnr\n";
    os << row.epoch << ',' << row.lr << ',' << row.train_loss << ',' << row.train_mse << ','
       << row.val_rmse << ',' << row.val_ssim << ',' << row.val_psnr << '\n';
}

/// The shared epoch loop behind train() and transfer() fine-tuning. Assumes the
/// model/optimizer/rng already carry the state of `start_epoch` completed epochs.
TrainResult run_epochs(RadioDUN& model, nn::AdamW& opt, std::mt19937_64 rng, const Dataset& ds,
                       const DatasetSpec& data, const RunConfig& run, int start_epoch,
                       const std::string& ckpt_stem) {
    if (ds.train.empty()) throw std::runtime_error("dataset: train split is empty");
    const std::string dir = ensure_out_tree(run.out_dir);
    TrainResult res;
    res.best_checkpoint = dir + "/checkpoints/" + ckpt_stem + "_best.ckpt";
    res.last_checkpoint = dir + "/checkpoints/" + ckpt_stem + "_last.ckpt";
    res.log_path = dir + "/logs/" + ckpt_stem + "_log.csv";
    res.best_val_rmse = std::numeric_limits<double>::infinity();

    const long n_train = static_cast<long>(ds.train.size());
    const long steps_per_epoch = (n_train + run.batch_size - 1) / run.batch_size;
    const long total_steps = static_cast<long>(run.epochs) * steps_per_epoch;
    long global_step = static_cast<long>(start_epoch) * steps_per_epoch;

    // the annealing horizon stays run.epochs even when this call stops earlier
    const int end_epoch =
        run.epoch_limit > 0 ? std::min(run.epochs, start_epoch + run.epoch_limit) : run.epochs;
    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        std::vector<size_t> order(ds.train.begin(), ds.train.end());
        std::shuffle(order.begin(), order.end(), rng);

        model.set_train(true);
        double loss_sum = 0.0, mse_sum = 0.0;
        long seen = 0;
        for (long b = 0; b < n_train; b += run.batch_size) {
            std::vector<ModelInput> inputs;
            std::vector<GridMap> gts;
            for (long i = b; i < std::min(n_train, b + run.batch_size); ++i) {
                const Example& e = ds.examples[order[static_cast<size_t>(i)]];
                inputs.push_back(make_input(e, data, static_cast<uint64_t>(epoch) + 1));
                gts.push_back(e.map.values);
            }
            const nn::Tensor gt = batch_from_grids(gts);
            opt.set_lr(nn::cosine_annealed_lr(run.lr, run.lr_min, global_step, total_steps));
            ForwardResult out = model.forward(inputs);
            nn::Tensor loss = run.mse_only ? mse_t(gt, out.x_hat)
                                           : total_loss_t(gt, out.x_hat, out.x_sigma, run.mu);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch));
            loss_sum += lv * static_cast<double>(inputs.size());
            mse_sum += mse_of_values(gt, out.x_hat) * static_cast<double>(inputs.size());
            seen += static_cast<long>(inputs.size());
            loss.backward();
            opt.step();
            ++global_step;
        }

        model.set_train(false);
        const EvalReport val = validation_report(model, ds, data);

        EpochLog row;
        row.epoch = epoch + 1;
        row.lr = opt.lr();
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.train_mse = mse_sum / static_cast<double>(seen);
        row.val_rmse = val.rmse;
        row.val_ssim = val.ssim;
        row.val_psnr = val.psnr;
        append_epoch_log(res.log_path, row);
        res.history.push_back(row);
        res.final_train_mse = row.train_mse;
        res.epochs_run += 1;

        const Checkpoint ck =
            snapshot(model, &opt, static_cast<uint64_t>(epoch) + 1, rng_to_string(rng));
        ck.save(res.last_checkpoint);
        if (val.rmse < res.best_val_rmse) {
            res.best_val_rmse = val.rmse;
            ck.save(res.best_checkpoint);
        }
    }
    return res;
}

std::string checkpoint_stem(const std::string& path) {
    return fs::path(path).stem().string();
}

}  // namespace

void RunConfig::validate() const {
    std::vector<std::string> errs;
    try {
        model.validate();
    } catch (const std::exception& ex) {
        errs.push_back(ex.what());
    }
    if (!(lr > 0)) errs.push_back("lr must be > 0");
    if (lr_min < 0 || lr_min > lr) errs.push_back("lr_min must be in [0, lr]");
    if (weight_decay < 0) errs.push_back("weight_decay must be >= 0");
    if (epochs < 1) errs.push_back("epochs must be >= 1");
    if (epoch_limit < 0) errs.push_back("epoch_limit must be >= 0");
    if (batch_size < 1) errs.push_back("batch_size must be >= 1");
    if (mu < 0) errs.push_back("mu must be >= 0");
    if (out_dir.empty()) errs.push_back("out_dir is required");
    if (transfer_fraction < 0 || transfer_fraction > 1)
        errs.push_back("transfer_fraction must be in [0, 1]");
    if (transfer_epochs < 0) errs.push_back("transfer_epochs must be >= 0");
    if (!errs.empty()) {
        std::string msg = "invalid run config:";
        for (const std::string& e : errs) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["model"] = nlohmann::json::parse(model.to_json());
    j["lr"] = lr;
    j["lr_min"] = lr_min;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["epoch_limit"] = epoch_limit;
    j["batch_size"] = batch_size;
    j["mu"] = mu;
    j["mse_only"] = mse_only;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["resume_from"] = resume_from;
    j["source_checkpoint"] = source_checkpoint;
    j["transfer_fraction"] = transfer_fraction;
    j["transfer_epochs"] = transfer_epochs;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    RunConfig r;
    if (j.contains("model")) r.model = ModelConfig::from_json(j.at("model").dump());
    r.lr = j.value("lr", r.lr);
    r.lr_min = j.value("lr_min", r.lr_min);
    r.weight_decay = j.value("weight_decay", r.weight_decay);
    r.epochs = j.value("epochs", r.epochs);
    r.epoch_limit = j.value("epoch_limit", r.epoch_limit);
    r.batch_size = j.value("batch_size", r.batch_size);
    r.mu = j.value("mu", r.mu);
    r.mse_only = j.value("mse_only", r.mse_only);
    r.seed = j.value("seed", r.seed);
    r.out_dir = j.value("out_dir", r.out_dir);
    r.resume_from = j.value("resume_from", r.resume_from);
    r.source_checkpoint = j.value("source_checkpoint", r.source_checkpoint);
    r.transfer_fraction = j.value("transfer_fraction", r.transfer_fraction);
    r.transfer_epochs = j.value("transfer_epochs", r.transfer_epochs);
    r.validate();
    return r;
}

std::string ensure_out_tree(const std::string& out_dir) {
    if (out_dir.empty()) throw std::invalid_argument("out_dir is required");
    for (const char* sub : {"checkpoints", "reports", "plots", "logs"})
        fs::create_directories(fs::path(out_dir) / sub);
    return out_dir;
}

TrainResult train(const RunConfig& run, const DatasetSpec& data) {
    run.validate();
    data.validate();
    const Dataset ds = build_dataset(data);
    check_compatibility(run.model, ds);

    RadioDUN model(run.model, run.seed);
    nn::AdamWConfig ocfg;
    ocfg.lr = run.lr;
    ocfg.weight_decay = run.weight_decay;
    nn::AdamW opt(model.params(), ocfg);
    std::mt19937_64 rng(mix(run.seed, 0x7e41ull));
    int start_epoch = 0;

    if (!run.resume_from.empty()) {
        const Checkpoint ck = Checkpoint::load(run.resume_from);
        if (ck.config.to_json() != run.model.to_json())
            throw std::runtime_error("resume: checkpoint model config differs from the run config");
        restore(model, &opt, ck);
        rng = rng_from_string(ck.rng_state);
        start_epoch = static_cast<int>(ck.epoch);
        if (start_epoch >= run.epochs)
            throw std::runtime_error("resume: checkpoint already has " +
                                     std::to_string(start_epoch) + " epochs, run wants " +
                                     std::to_string(run.epochs));
    }
    return run_epochs(model, opt, rng, ds, data, run, start_epoch, "train");
}

EvalReport evaluate(const std::string& checkpoint_path, const DatasetSpec& data,
                    const EvalOptions& opt, const std::string& out_dir) {
    data.validate();
    const Checkpoint ck = Checkpoint::load(checkpoint_path);
    RadioDUN model = model_from_checkpoint(ck);
    model.set_train(false);

    const Dataset ds = build_dataset(data);
    check_compatibility(model.config(), ds);
    const std::vector<size_t>& idx = ds.split(opt.split);
    if (idx.empty()) throw std::runtime_error("evaluate: split '" + opt.split + "' is empty");

    const std::string dir = ensure_out_tree(out_dir);
    std::vector<GridMap> gts, hats;
    for (size_t i : idx) {
        const Example& e = ds.examples[i];
        ForwardResult r = model.forward({make_input(e, data, 0)});
        gts.push_back(e.map.values);
        hats.push_back(grid_from_batch(r.x_hat, 0));
    }

    EvalReport rep = aggregate_report(gts, hats);
    rep.method = opt.method;
    rep.dataset_id = data.id();
    rep.tx_known = data.tx_known;
    rep.n_samples = data.samples_per_map;
    rep.checkpoint_id = checkpoint_stem(checkpoint_path);
    rep.seed = data.seed;

    std::ofstream(dir + "/reports/" + opt.method + "_" + opt.split + ".json") << rep.to_json();
    rep.append_csv(dir + "/reports/results.csv");
    if (opt.panels)
        for (int i = 0; i < std::min<int>(opt.panel_count, static_cast<int>(gts.size())); ++i)
            render_panels(dir + "/plots", opt.method + "_" + opt.split, i,
                          gts[static_cast<size_t>(i)], hats[static_cast<size_t>(i)]);
    return rep;
}

EvalReport baseline_evaluate(const DatasetSpec& data, const AOConfig& cfg, const EvalOptions& opt,
                             const std::string& out_dir) {
    data.validate();
    const Dataset ds = build_dataset(data);
    const std::vector<size_t>& idx = ds.split(opt.split);
    if (idx.empty()) throw std::runtime_error("baseline: split '" + opt.split + "' is empty");

    const std::string dir = ensure_out_tree(out_dir);
    std::vector<GridMap> gts, hats;
    for (size_t i : idx) {
        const Example& e = ds.examples[i];
        const ModelInput in = make_input(e, data, 0);
        const AOResult r = ao_solve(in.priors, in.y, in.plan, cfg);
        gts.push_back(e.map.values);
        hats.push_back(r.map.values);
    }

    EvalReport rep = aggregate_report(gts, hats);
    rep.method = opt.method;
    rep.dataset_id = data.id();
    rep.tx_known = data.tx_known;
    rep.n_samples = data.samples_per_map;
    rep.checkpoint_id = "ao-solver";
    rep.seed = data.seed;

    std::ofstream(dir + "/reports/" + opt.method + "_" + opt.split + ".json") << rep.to_json();
    rep.append_csv(dir + "/reports/results.csv");
    if (opt.panels)
        for (int i = 0; i < std::min<int>(opt.panel_count, static_cast<int>(gts.size())); ++i)
            render_panels(dir + "/plots", opt.method + "_" + opt.split, i,
                          gts[static_cast<size_t>(i)], hats[static_cast<size_t>(i)]);
    return rep;
}

TransferResult transfer(const RunConfig& run, const DatasetSpec& target) {
    run.validate();
    target.validate();
    if (run.source_checkpoint.empty())
        throw std::invalid_argument("transfer: source_checkpoint is required");

    const Checkpoint src = Checkpoint::load(run.source_checkpoint);
    const std::string dir = ensure_out_tree(run.out_dir);

    TransferResult res;
    EvalOptions zopt;
    zopt.method = "transfer-zero-shot";
    res.zero_shot = evaluate(run.source_checkpoint, target, zopt, run.out_dir);

    const std::string out_ckpt = dir + "/checkpoints/transfer_last.ckpt";
    if (run.transfer_fraction == 0.0 || run.transfer_epochs == 0) {
        // zero-shot: the transfer checkpoint carries the source weights untouched
        Checkpoint copy = src;
        copy.optim.clear();
        copy.save(out_ckpt);
        res.checkpoint = out_ckpt;
        res.report = res.zero_shot;
        return res;
    }

    Dataset ds = build_dataset(target);
    check_compatibility(src.config, ds);
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::lround(run.transfer_fraction *
                                           static_cast<double>(ds.train.size()))));
    if (ds.train.size() > keep) ds.train.resize(keep);

    RadioDUN model = model_from_checkpoint(src);
    nn::AdamWConfig ocfg;
    ocfg.lr = run.lr;
    ocfg.weight_decay = run.weight_decay;
    nn::AdamW opt(model.params(), ocfg);
    std::mt19937_64 rng(mix(run.seed, 0x7f117ull));

    RunConfig ft = run;
    ft.epochs = run.transfer_epochs;
    const TrainResult tr = run_epochs(model, opt, rng, ds, target, ft, 0, "transfer");

    res.checkpoint = tr.last_checkpoint;
    EvalOptions fopt;
    fopt.method = "transfer";
    res.report = evaluate(tr.last_checkpoint, target, fopt, run.out_dir);
    return res;
}

}  // namespace radiodun

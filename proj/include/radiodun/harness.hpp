#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radiodun/checkpoint.hpp"
#include "radiodun/dataset.hpp"
#include "radiodun/objectives.hpp"
#include "radiodun/solver.hpp"

namespace radiodun {

/// Training/transfer hyperparameters plus output locations. Serializable so one
/// config file drives every CLI subcommand.
struct RunConfig {
    ModelConfig model;
    double lr = 1e-3;
    double lr_min = 0.0;          // cosine-annealing floor
    double weight_decay = 1e-4;
    int epochs = 100;
    int epoch_limit = 0;          // stop a call after this many epochs (0 = run to `epochs`)
    int batch_size = 1;
    double mu = 1.0;              // MSE weight inside the total loss
    bool mse_only = false;        // ablation: train on plain MSE, no shadowing term
    uint64_t seed = 0;
    std::string out_dir = "out";
    std::string resume_from;      // optional checkpoint to continue training from

    std::string source_checkpoint;   // transfer: pretrained weights
    double transfer_fraction = 0.0;  // share of the target train split to fine-tune on
    int transfer_epochs = 20;

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_mse = 0.0;
    double val_rmse = 0.0;
    double val_ssim = 0.0;
    double val_psnr = 0.0;
};

struct TrainResult {
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string log_path;
    int epochs_run = 0;             // epochs executed in this call
    double final_train_mse = 0.0;
    double best_val_rmse = 0.0;
    std::vector<EpochLog> history;  // one row per epoch of this call
};

/// Full training loop: shuffled by-epoch batches, cosine-annealed AdamW on the
/// total loss, per-epoch validation, CSV logging, best + last checkpoints, and
/// deterministic resume via RunConfig::resume_from.
TrainResult train(const RunConfig& run, const DatasetSpec& data);

struct EvalOptions {
    std::string split = "test";
    std::string method = "radiodun";
    bool panels = false;    // render prediction / ground truth / |error| images
    int panel_count = 4;
};

/// Forward pass over one split; aggregates RMSE (pooled), SSIM (mean), PSNR
/// (pooled) and writes the report JSON plus a row of reports/results.csv.
EvalReport evaluate(const std::string& checkpoint_path, const DatasetSpec& data,
                    const EvalOptions& opt, const std::string& out_dir);

/// The classical alternating-optimization solver under the identical protocol,
/// reported with the same schema.
EvalReport baseline_evaluate(const DatasetSpec& data, const AOConfig& cfg, const EvalOptions& opt,
                             const std::string& out_dir);

struct TransferResult {
    std::string checkpoint;
    EvalReport zero_shot;  // target-test report of the untouched source weights
    EvalReport report;     // final target-test report (zero_shot when fraction = 0)
};

/// Zero-shot or fine-tuned domain transfer; fraction 0 copies the source weights
/// bit-exactly into the transfer checkpoint.
TransferResult transfer(const RunConfig& run, const DatasetSpec& target);

/// Creates out_dir/{checkpoints,reports,plots,logs}; returns out_dir.
std::string ensure_out_tree(const std::string& out_dir);

}  // namespace radiodun

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radiodun/model.hpp"
#include "radiodun/sampling.hpp"
#include "radiodun/scene.hpp"

namespace radiodun {

enum class DatasetSource { synthetic, radiomapseer };

DatasetSource dataset_source_from_string(const std::string& s);
std::string to_string(DatasetSource s);

/// Generator knobs for the synthetic corpus.
struct SyntheticParams {
    int count = 100;
    int h = 64;
    int w = 64;
    int m = 2;  // obstacle channels: buildings first, then scattered clutter
    double alpha = 2.0;
    double eta = 0.5;
    double sigma_delta = 0.05;
};

/// Everything that determines a dataset: its source, the split, and how sparse
/// observations are drawn from each map. (seed, spec) fully determine the data.
struct DatasetSpec {
    DatasetSource source = DatasetSource::synthetic;
    SyntheticParams synth;
    std::string root;            // radiomapseer root directory
    std::string variant = "DPM"; // radiomapseer gain variant: DPM | IRT4
    double split_train = 0.75;
    double split_val = 0.05;
    double split_test = 0.2;
    uint64_t seed = 0;
    int samples_per_map = 9;
    PlanKind sampling_kind = PlanKind::uniform_random;
    bool tx_known = true;
    int train_subset = 0;  // 0 = all; else keep the first k pairs of the shuffled train split

    std::string id() const;  // short label for reports
    void validate() const;
    std::string to_json() const;
    static DatasetSpec from_json(const std::string& text);
};

/// One (scene, ground-truth map) pair. `city` is the split-grouping key: scenes of
/// the same city never cross split boundaries.
struct Example {
    SceneGrid scene;
    RadioMap map;
    int city = 0;
    int tx_index = 0;
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<size_t> train, val, test;     // indices into examples
    std::vector<std::string> warnings;        // skipped-file notes from loading

    const std::vector<size_t>& split(const std::string& name) const;
};

/// Deterministic desk-scale corpus; identical bytes per (spec.synth, spec.seed).
Dataset make_synthetic(const DatasetSpec& spec);

/// Ingests an on-disk tree:
///   root/buildings/<city>.png      binary obstacle channel (any nonzero = occupied)
///   root/cars/<city>.png           second obstacle channel
///   root/gain/<variant>/<city>_<tx>.png   8-bit gain map, dequantized to [0,1]
///   root/antennas/<city>.json      optional [[x, y], ...] 1-based tx cells per index
/// Missing required files raise one itemized error; unreadable images are skipped
/// with a warning recorded on the returned dataset.
Dataset load_radiomapseer(const DatasetSpec& spec);

/// Dispatch on spec.source.
Dataset build_dataset(const DatasetSpec& spec);

/// Observation draw + prior assembly for one example. The plan is seeded from
/// (spec.seed, salt, example identity): pass a fixed salt for stable evaluation
/// plans and the epoch number for fresh training plans.
ModelInput make_input(const Example& e, const DatasetSpec& spec, uint64_t salt);

}  // namespace radiodun

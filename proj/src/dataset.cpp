#include "radiodun/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace radiodun {

namespace {

/// splitmix64: decorrelates composite seeds built from small integers.
uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Shuffled by-city split; every example of a city lands in exactly one split.
/// The optional train_subset keeps the first k pairs of the shuffled train split.
void assign_splits(Dataset& ds, const DatasetSpec& spec) {
    std::vector<int> cities;
    for (const Example& e : ds.examples)
        if (std::find(cities.begin(), cities.end(), e.city) == cities.end())
            cities.push_back(e.city);
    std::sort(cities.begin(), cities.end());
    std::mt19937_64 rng(mix(spec.seed, 0x517175ull));
    std::shuffle(cities.begin(), cities.end(), rng);

    const long n = static_cast<long>(cities.size());
    const long n_train = std::lround(spec.split_train * static_cast<double>(n));
    const long n_val = std::lround(spec.split_val * static_cast<double>(n));
    std::map<int, int> split_of;  // city -> 0 train, 1 val, 2 test
    for (long i = 0; i < n; ++i)
        split_of[cities[static_cast<size_t>(i)]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

    // train examples follow the shuffled city order so subset capping is stable
    for (long ci = 0; ci < n; ++ci) {
        const int city = cities[static_cast<size_t>(ci)];
        if (split_of[city] != 0) continue;
        for (size_t i = 0; i < ds.examples.size(); ++i)
            if (ds.examples[i].city == city) ds.train.push_back(i);
    }
    for (size_t i = 0; i < ds.examples.size(); ++i) {
        const int s = split_of[ds.examples[i].city];
        if (s == 1) ds.val.push_back(i);
        if (s == 2) ds.test.push_back(i);
    }
    if (spec.train_subset > 0 && ds.train.size() > static_cast<size_t>(spec.train_subset))
        ds.train.resize(static_cast<size_t>(spec.train_subset));
}

/// A handful of axis-aligned blocks for buildings, scattered cells for clutter.
SceneGrid random_scene(const SyntheticParams& p, uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&rng](int lo, int hi) {  // inclusive
        return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
    };

    SceneGrid scene;
    scene.h = p.h;
    scene.w = p.w;
    scene.tx_x = pick(1, p.h);
    scene.tx_y = pick(1, p.w);

    for (int ch = 0; ch < p.m; ++ch) {
        GridMap g(p.h, p.w);
        if (ch == 0) {
            const int blocks = pick(2, 5);
            for (int b = 0; b < blocks; ++b) {
                const int bh = pick(2, std::max(2, p.h / 4));
                const int bw = pick(2, std::max(2, p.w / 4));
                const int r0 = pick(0, p.h - bh);
                const int c0 = pick(0, p.w - bw);
                for (int r = r0; r < r0 + bh; ++r)
                    for (int c = c0; c < c0 + bw; ++c) g.at(r, c) = 1.0;
            }
        } else {
            const int cells = pick(p.h / 2, p.h * 2);
            for (int k = 0; k < cells; ++k) g.at(pick(0, p.h - 1), pick(0, p.w - 1)) = 1.0;
        }
        // keep the transmitter cell free so it is never inside an obstacle
        g.at(scene.tx_x - 1, scene.tx_y - 1) = 0.0;
        scene.obstacle_maps.push_back(std::move(g));
    }
    scene.validate();
    return scene;
}

int parse_int(const std::string& s) {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
    return v;
}

GridMap binary_channel(const GrayImage& img) {
    GridMap g(img.h, img.w);
    for (size_t i = 0; i < g.size(); ++i) g[i] = img.pixels[i] > 0 ? 1.0 : 0.0;
    return g;
}

}  // namespace

DatasetSource dataset_source_from_string(const std::string& s) {
    if (s == "synthetic") return DatasetSource::synthetic;
    if (s == "radiomapseer") return DatasetSource::radiomapseer;
    throw std::invalid_argument("unknown dataset source '" + s + "'");
}

std::string to_string(DatasetSource s) {
    return s == DatasetSource::synthetic ? "synthetic" : "radiomapseer";
}

std::string DatasetSpec::id() const {
    if (source == DatasetSource::synthetic)
        return "synthetic-" + std::to_string(synth.h) + "x" + std::to_string(synth.w);
    return "radiomapseer-" + variant;
}

void DatasetSpec::validate() const {
    std::vector<std::string> errs;
    if (std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
        errs.push_back("split ratios must sum to 1");
    if (split_train < 0 || split_val < 0 || split_test < 0)
        errs.push_back("split ratios must be nonnegative");
    if (samples_per_map < 1) errs.push_back("samples_per_map must be >= 1");
    if (train_subset < 0) errs.push_back("train_subset must be >= 0");
    if (source == DatasetSource::synthetic) {
        if (synth.count < 1) errs.push_back("synthetic count must be >= 1");
        if (synth.h < 2 || synth.w < 2) errs.push_back("synthetic dims must be >= 2");
        if (synth.m < 1) errs.push_back("synthetic m must be >= 1");
        if (synth.sigma_delta < 0) errs.push_back("sigma_delta must be >= 0");
    } else {
        if (root.empty()) errs.push_back("radiomapseer root is required");
        if (variant != "DPM" && variant != "IRT4") errs.push_back("variant must be DPM or IRT4");
    }
    if (!errs.empty()) {
        std::string msg = "invalid dataset spec:";
        for (const std::string& e : errs) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
}

std::string DatasetSpec::to_json() const {
    nlohmann::json j;
    j["source"] = radiodun::to_string(source);
    j["synthetic"] = {{"count", synth.count}, {"h", synth.h},         {"w", synth.w},
                      {"m", synth.m},         {"alpha", synth.alpha}, {"eta", synth.eta},
                      {"sigma_delta", synth.sigma_delta}};
    j["root"] = root;
    j["variant"] = variant;
    j["split"] = {split_train, split_val, split_test};
    j["seed"] = seed;
    j["samples_per_map"] = samples_per_map;
    j["sampling_kind"] = radiodun::to_string(sampling_kind);
    j["tx_known"] = tx_known;
    j["train_subset"] = train_subset;
    return j.dump(2);
}

DatasetSpec DatasetSpec::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    DatasetSpec s;
    if (j.contains("source")) s.source = dataset_source_from_string(j.at("source"));
    if (j.contains("synthetic")) {
        const auto& g = j.at("synthetic");
        s.synth.count = g.value("count", s.synth.count);
        s.synth.h = g.value("h", s.synth.h);
        s.synth.w = g.value("w", s.synth.w);
        s.synth.m = g.value("m", s.synth.m);
        s.synth.alpha = g.value("alpha", s.synth.alpha);
        s.synth.eta = g.value("eta", s.synth.eta);
        s.synth.sigma_delta = g.value("sigma_delta", s.synth.sigma_delta);
    }
    s.root = j.value("root", s.root);
    s.variant = j.value("variant", s.variant);
    if (j.contains("split")) {
        const auto& sp = j.at("split");
        if (!sp.is_array() || sp.size() != 3)
            throw std::invalid_argument("dataset spec: split must be [train, val, test]");
        s.split_train = sp[0];
        s.split_val = sp[1];
        s.split_test = sp[2];
    }
    s.seed = j.value("seed", s.seed);
    s.samples_per_map = j.value("samples_per_map", s.samples_per_map);
    if (j.contains("sampling_kind")) s.sampling_kind = plan_kind_from_string(j.at("sampling_kind"));
    s.tx_known = j.value("tx_known", s.tx_known);
    s.train_subset = j.value("train_subset", s.train_subset);
    s.validate();
    return s;
}

const std::vector<size_t>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + name + "' (train|val|test)");
}

Dataset make_synthetic(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    for (int i = 0; i < spec.synth.count; ++i) {
        Example e;
        e.scene = random_scene(spec.synth, mix(spec.seed, static_cast<uint64_t>(i)));
        e.map = synth_radio_map(e.scene, spec.synth.alpha, spec.synth.eta, spec.synth.sigma_delta,
                                mix(spec.seed, 0x8000000ull + static_cast<uint64_t>(i)));
        e.city = i;
        e.tx_index = 0;
        ds.examples.push_back(std::move(e));
    }
    assign_splits(ds, spec);
    return ds;
}

Dataset load_radiomapseer(const DatasetSpec& spec) {
    spec.validate();
    const fs::path root(spec.root);
    const fs::path buildings = root / "buildings";
    const fs::path cars = root / "cars";
    const fs::path gain = root / "gain" / spec.variant;
    const fs::path antennas = root / "antennas";

    if (!fs::is_directory(buildings))
        throw std::runtime_error("radiomapseer: missing directory " + buildings.string());

    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(buildings))
        if (entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty())
        throw std::runtime_error("radiomapseer: no city maps under " + buildings.string());

    // first pass: itemize every missing required file before reading anything
    std::vector<std::string> missing;
    std::map<std::string, std::vector<std::pair<int, fs::path>>> gain_files;
    for (const std::string& stem : stems) {
        if (!fs::exists(cars / (stem + ".png")))
            missing.push_back((cars / (stem + ".png")).string());
        std::vector<std::pair<int, fs::path>> found;
        if (fs::is_directory(gain)) {
            for (const auto& entry : fs::directory_iterator(gain)) {
                if (entry.path().extension() != ".png") continue;
                const std::string g = entry.path().stem().string();
                const size_t us = g.rfind('_');
                if (us == std::string::npos || g.substr(0, us) != stem) continue;
                try {
                    found.emplace_back(parse_int(g.substr(us + 1)), entry.path());
                } catch (const std::exception&) {
                    continue;  // not a "<city>_<tx>" stem
                }
            }
        }
        std::sort(found.begin(), found.end());
        if (found.empty())
            missing.push_back((gain / (stem + "_<tx>.png")).string() + " (no gain maps)");
        gain_files[stem] = std::move(found);
    }
    if (!missing.empty()) {
        std::string msg = "radiomapseer: missing files:";
        for (const std::string& m : missing) msg += "\n  - " + m;
        throw std::runtime_error(msg);
    }

    Dataset ds;
    int city_index = 0;
    for (const std::string& stem : stems) {
        SceneGrid base;
        try {
            const GrayImage b = read_gray((buildings / (stem + ".png")).string());
            const GrayImage c = read_gray((cars / (stem + ".png")).string());
            if (b.h != c.h || b.w != c.w) throw std::runtime_error("building/car shape mismatch");
            base.h = b.h;
            base.w = b.w;
            base.obstacle_maps = {binary_channel(b), binary_channel(c)};
        } catch (const std::exception& ex) {
            ds.warnings.push_back("skipped city " + stem + ": " + ex.what());
            ++city_index;
            continue;
        }

        // optional transmitter positions; absent -> transmitter-unknown scenes
        std::vector<std::pair<int, int>> tx_cells;
        const fs::path ant = antennas / (stem + ".json");
        if (fs::exists(ant)) {
            try {
                std::ifstream is(ant);
                const nlohmann::json j = nlohmann::json::parse(is);
                for (const auto& cell : j)
                    tx_cells.emplace_back(int(cell.at(0)), int(cell.at(1)));
            } catch (const std::exception& ex) {
                ds.warnings.push_back("unreadable antenna list " + ant.string() + ": " + ex.what());
                tx_cells.clear();
            }
        }

        for (const auto& [tx, path] : gain_files[stem]) {
            Example e;
            e.scene = base;
            if (static_cast<size_t>(tx) < tx_cells.size()) {
                e.scene.tx_x = tx_cells[static_cast<size_t>(tx)].first;
                e.scene.tx_y = tx_cells[static_cast<size_t>(tx)].second;
                e.scene.tx_known = true;
            } else {
                e.scene.tx_x = 0;
                e.scene.tx_y = 0;
                e.scene.tx_known = false;
            }
            try {
                const GrayImage g = read_gray(path.string());
                if (g.h != base.h || g.w != base.w) throw std::runtime_error("gain shape mismatch");
                e.map.values = dequantize_map(g);
                e.map.normalized = true;
                e.scene.validate();
                e.map.validate();
            } catch (const std::exception& ex) {
                ds.warnings.push_back("skipped " + path.string() + ": " + ex.what());
                continue;
            }
            e.city = city_index;
            e.tx_index = tx;
            ds.examples.push_back(std::move(e));
        }
        ++city_index;
    }
    if (ds.examples.empty()) throw std::runtime_error("radiomapseer: every pair was skipped");
    assign_splits(ds, spec);
    return ds;
}

Dataset build_dataset(const DatasetSpec& spec) {
    return spec.source == DatasetSource::synthetic ? make_synthetic(spec) : load_radiomapseer(spec);
}

ModelInput make_input(const Example& e, const DatasetSpec& spec, uint64_t salt) {
    const int h = e.scene.h, w = e.scene.w;
    const uint64_t plan_seed =
        mix(mix(spec.seed, salt), static_cast<uint64_t>(e.city) * 131071ull +
                                      static_cast<uint64_t>(e.tx_index));
    ModelInput in;
    in.plan = build_plan(spec.sampling_kind, spec.samples_per_map, h, w, plan_seed);
    in.y = sample(e.map, in.plan, 0.0, mix(plan_seed, 1)).values;

    const bool know_tx = spec.tx_known && e.scene.tx_known;
    in.priors.push_back(know_tx ? distance_map(e.scene.tx_x, e.scene.tx_y, h, w)
                                : distance_map(0, 0, h, w));
    for (const GridMap& obs : e.scene.obstacle_maps) in.priors.push_back(obs);
    return in;
}

}  // namespace radiodun

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "radiodun/harness.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using namespace radiodun;

namespace {

/// Fresh scratch directory per test run, removed eagerly to keep reruns clean.
std::string scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("radiodun_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

DatasetSpec tiny_spec(uint64_t seed, int count = 8) {
    DatasetSpec spec;
    spec.source = DatasetSource::synthetic;
    spec.synth.count = count;
    spec.synth.h = 16;
    spec.synth.w = 16;
    spec.synth.m = 1;
    spec.seed = seed;
    spec.samples_per_map = 24;
    return spec;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.K = 1;
    mc.C = 4;
    mc.m = 1;
    mc.unet_depth = 2;
    mc.base_channels = 4;
    mc.H = 16;
    mc.W = 16;
    return mc;
}

RunConfig tiny_run(const std::string& out_dir, uint64_t seed = 3) {
    RunConfig run;
    run.model = tiny_model();
    run.epochs = 2;
    run.batch_size = 2;
    run.seed = seed;
    run.out_dir = out_dir;
    return run;
}

size_t line_count(const std::string& path) {
    std::ifstream is(path);
    size_t n = 0;
    std::string line;
    while (std::getline(is, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("dataset spec validation and JSON round trip") {
    DatasetSpec spec = tiny_spec(5);
    CHECK_NOTHROW(spec.validate());
    DatasetSpec round = DatasetSpec::from_json(spec.to_json());
    CHECK(round.to_json() == spec.to_json());
    CHECK(round.synth.h == 16);
    CHECK(round.samples_per_map == 24);

    DatasetSpec bad = spec;
    bad.split_train = 0.9;  // ratios no longer sum to 1
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("sum to 1"), std::invalid_argument);
    bad = spec;
    bad.samples_per_map = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = spec;
    bad.source = DatasetSource::radiomapseer;
    bad.root = "";
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("root"), std::invalid_argument);
}

TEST_CASE("synthetic dataset: determinism, splits, and subset capping") {
    DatasetSpec spec = tiny_spec(11, 20);
    Dataset a = make_synthetic(spec);
    Dataset b = make_synthetic(spec);
    REQUIRE(a.examples.size() == 20);

    SUBCASE("identical bytes for identical (spec, seed)") {
        for (size_t i = 0; i < a.examples.size(); ++i) {
            CHECK(a.examples[i].map.values.v == b.examples[i].map.values.v);
            for (size_t c = 0; c < a.examples[i].scene.obstacle_maps.size(); ++c)
                CHECK(a.examples[i].scene.obstacle_maps[c].v ==
                      b.examples[i].scene.obstacle_maps[c].v);
        }
        DatasetSpec other = spec;
        other.seed = 12;
        Dataset c = make_synthetic(other);
        CHECK(c.examples[0].map.values.v != a.examples[0].map.values.v);
    }
    SUBCASE("splits are disjoint, exhaustive, and city-grouped across seeds") {
        for (uint64_t seed : {1u, 2u, 3u}) {
            DatasetSpec s = tiny_spec(seed, 20);
            Dataset d = make_synthetic(s);
            std::set<size_t> seen;
            for (const auto* split : {&d.train, &d.val, &d.test})
                for (size_t i : *split) CHECK(seen.insert(i).second);
            CHECK(seen.size() == d.examples.size());
            // 0.75/0.05/0.2 of 20 cities -> 15/1/4
            CHECK(d.train.size() == 15);
            CHECK(d.val.size() == 1);
            CHECK(d.test.size() == 4);
        }
    }
    SUBCASE("train subset keeps the first k of the shuffled split") {
        DatasetSpec capped = spec;
        capped.train_subset = 5;
        Dataset d = make_synthetic(capped);
        REQUIRE(d.train.size() == 5);
        std::vector<size_t> full = a.train;
        full.resize(5);
        CHECK(d.train == full);
    }
    SUBCASE("maps are normalized and scenes carry m obstacle channels") {
        for (const Example& e : a.examples) {
            CHECK(e.map.normalized);
            CHECK(e.map.values.min() >= 0.0);
            CHECK(e.map.values.max() <= 1.0);
            CHECK(e.scene.num_obstacle_channels() == 1);
        }
    }
}

TEST_CASE("make_input: plan stability, salts, and the transmitter-unknown prior") {
    DatasetSpec spec = tiny_spec(21, 4);
    Dataset ds = make_synthetic(spec);
    const Example& e = ds.examples[0];

    ModelInput fixed1 = make_input(e, spec, 0);
    ModelInput fixed2 = make_input(e, spec, 0);
    CHECK(fixed1.plan.indices == fixed2.plan.indices);
    CHECK(fixed1.y == fixed2.y);

    ModelInput epoch1 = make_input(e, spec, 1);
    CHECK(fixed1.plan.indices != epoch1.plan.indices);

    SUBCASE("observations gather the map exactly at the plan cells") {
        for (int k = 0; k < fixed1.plan.count(); ++k)
            CHECK(fixed1.y[static_cast<size_t>(k)] ==
                  e.map.values[static_cast<size_t>(fixed1.plan.indices[static_cast<size_t>(k)])]);
    }
    SUBCASE("priors are the distance map plus the obstacle channels") {
        REQUIRE(fixed1.priors.size() == 2);
        const GridMap want = distance_map(e.scene.tx_x, e.scene.tx_y, 16, 16);
        CHECK(fixed1.priors[0].v == want.v);
        CHECK(fixed1.priors[1].v == e.scene.obstacle_maps[0].v);
    }
    SUBCASE("transmitter-unknown substitutes (0,0) into the distance map") {
        DatasetSpec unknown = spec;
        unknown.tx_known = false;
        ModelInput in = make_input(e, unknown, 0);
        const GridMap want = distance_map(0, 0, 16, 16);
        CHECK(in.priors[0].v == want.v);
    }
}

TEST_CASE("radiomapseer loader: layout, tx fallback, itemized errors, corrupt skips") {
    const std::string root = scratch("rms");
    fs::create_directories(fs::path(root) / "buildings");
    fs::create_directories(fs::path(root) / "cars");
    fs::create_directories(fs::path(root) / "gain" / "DPM");
    fs::create_directories(fs::path(root) / "antennas");

    auto gray = [](int h, int w, uint8_t fill) {
        GrayImage img;
        img.h = h;
        img.w = w;
        img.pixels.assign(static_cast<size_t>(h) * w, fill);
        return img;
    };
    // two cities, two transmitters each; city B has no antenna list
    for (const std::string city : {"cityA", "cityB"}) {
        GrayImage b = gray(12, 12, 0);
        b.pixels[5] = 200;  // one occupied cell
        write_gray(root + "/buildings/" + city + ".png", b);
        write_gray(root + "/cars/" + city + ".png", gray(12, 12, 0));
        for (int tx = 0; tx < 2; ++tx)
            write_gray(root + "/gain/DPM/" + city + "_" + std::to_string(tx) + ".png",
                       gray(12, 12, static_cast<uint8_t>(60 + 10 * tx)));
    }
    std::ofstream(root + "/antennas/cityA.json") << "[[3, 4], [7, 2]]";

    DatasetSpec spec;
    spec.source = DatasetSource::radiomapseer;
    spec.root = root;
    spec.variant = "DPM";
    spec.seed = 2;
    spec.samples_per_map = 10;
    spec.split_train = 0.5;
    spec.split_val = 0.0;
    spec.split_test = 0.5;

    SUBCASE("well-formed tree loads every (city, tx) pair") {
        Dataset ds = load_radiomapseer(spec);
        REQUIRE(ds.examples.size() == 4);
        CHECK(ds.warnings.empty());
        std::set<int> cities;
        for (const Example& e : ds.examples) {
            cities.insert(e.city);
            CHECK(e.scene.num_obstacle_channels() == 2);
            CHECK(e.map.normalized);
        }
        CHECK(cities.size() == 2);
        // obstacle thresholding: any nonzero pixel counts as occupied
        const Example& first = ds.examples[0];
        CHECK(first.scene.obstacle_maps[0].v[5] == 1.0);
        CHECK(first.scene.obstacle_maps[0].v[6] == 0.0);
        // cityA has antenna cells, cityB falls back to transmitter-unknown
        int known = 0, unknown = 0;
        for (const Example& e : ds.examples) e.scene.tx_known ? ++known : ++unknown;
        CHECK(known == 2);
        CHECK(unknown == 2);
        // splits stay city-grouped
        Dataset again = load_radiomapseer(spec);
        CHECK(again.train == ds.train);
        for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
            std::set<int> split_cities;
            for (size_t i : *split) split_cities.insert(ds.examples[i].city);
            for (const auto* other : {&ds.train, &ds.val, &ds.test}) {
                if (other == split) continue;
                for (size_t i : *other) CHECK(split_cities.count(ds.examples[i].city) == 0);
            }
        }
    }
    SUBCASE("missing companion files are itemized in one error") {
        fs::remove(root + "/cars/cityB.png");
        fs::remove(root + "/gain/DPM/cityA_0.png");
        fs::remove(root + "/gain/DPM/cityA_1.png");
        try {
            load_radiomapseer(spec);
            FAIL("expected an error");
        } catch (const std::runtime_error& ex) {
            const std::string msg = ex.what();
            CHECK(msg.find("cityB.png") != std::string::npos);
            CHECK(msg.find("cityA_<tx>.png") != std::string::npos);
        }
    }
    SUBCASE("corrupt images are skipped with a warning") {
        std::ofstream(root + "/gain/DPM/cityA_0.png") << "not a png";
        Dataset ds = load_radiomapseer(spec);
        CHECK(ds.examples.size() == 3);
        REQUIRE(ds.warnings.size() == 1);
        CHECK(ds.warnings[0].find("cityA_0.png") != std::string::npos);
    }
    SUBCASE("empty tree is rejected") {
        DatasetSpec missing = spec;
        missing.root = root + "/nowhere";
        CHECK_THROWS_WITH_AS(load_radiomapseer(missing), doctest::Contains("buildings"),
                             std::runtime_error);
    }
}

TEST_CASE("checkpoint: bit-exact round trip and mismatch errors") {
    const std::string dir = scratch("ckpt");
    ModelConfig mc = tiny_model();
    RadioDUN model(mc, 9);
    nn::AdamW opt(model.params());

    // take one optimizer step so moments and buffers are nontrivial
    DatasetSpec spec = tiny_spec(33, 2);
    Dataset ds = make_synthetic(spec);
    model.set_train(true);
    ModelInput in = make_input(ds.examples[0], spec, 1);
    nn::Tensor gt = batch_from_grids({ds.examples[0].map.values});
    ForwardResult out = model.forward({in});
    total_loss_t(gt, out.x_hat, out.x_sigma, 1.0).backward();
    opt.step();

    const std::string path = dir + "/model.ckpt";
    Checkpoint saved = snapshot(model, &opt, 7, "12345 67890");
    saved.save(path);
    Checkpoint loaded = Checkpoint::load(path);

    CHECK(loaded.epoch == 7);
    CHECK(loaded.rng_state == "12345 67890");
    CHECK(loaded.config.to_json() == mc.to_json());
    REQUIRE(loaded.params.size() == saved.params.size());
    for (const auto& [name, arr] : saved.params) {
        REQUIRE(loaded.params.count(name) == 1);
        CHECK((loaded.params.at(name) == arr).all());
    }
    for (const auto& [name, arr] : saved.buffers) CHECK((loaded.buffers.at(name) == arr).all());
    for (const auto& [name, arr] : saved.optim) CHECK((loaded.optim.at(name) == arr).all());

    SUBCASE("a restored model reproduces the source forward bit-exactly") {
        RadioDUN twin = model_from_checkpoint(loaded);
        twin.set_train(false);
        model.set_train(false);
        ForwardResult r1 = model.forward({in});
        ForwardResult r2 = twin.forward({in});
        CHECK((r1.x_hat.value() - r2.x_hat.value()).abs().maxCoeff() == 0.0);
        CHECK((r1.x_sigma.value() - r2.x_sigma.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("bad files and mismatched shapes are rejected") {
        CHECK_THROWS_AS(Checkpoint::load(dir + "/absent.ckpt"), std::runtime_error);
        std::ofstream(dir + "/garbage.ckpt") << "BADMAGIC and then some";
        CHECK_THROWS_WITH_AS(Checkpoint::load(dir + "/garbage.ckpt"),
                             doctest::Contains("magic"), std::runtime_error);
        ModelConfig bigger = mc;
        bigger.C = 6;
        RadioDUN other(bigger, 1);
        CHECK_THROWS_WITH_AS(restore(other, nullptr, loaded), doctest::Contains("mismatch"),
                             std::runtime_error);
    }
}

TEST_CASE("training: logging, divergence guard contracts, determinism, resume") {
    DatasetSpec spec = tiny_spec(44, 8);
    spec.split_train = 1.0;
    spec.split_val = 0.0;
    spec.split_test = 0.0;

    SUBCASE("a short run logs finite metrics and saves checkpoints") {
        const std::string dir = scratch("train");
        RunConfig run = tiny_run(dir);
        TrainResult res = train(run, spec);
        CHECK(res.epochs_run == 2);
        REQUIRE(res.history.size() == 2);
        for (const EpochLog& row : res.history) {
            CHECK(std::isfinite(row.train_loss));
            CHECK(std::isfinite(row.train_mse));
            CHECK(std::isfinite(row.val_rmse));
            CHECK(row.lr > 0.0);
            CHECK(row.lr <= run.lr);
        }
        CHECK(fs::exists(res.best_checkpoint));
        CHECK(fs::exists(res.last_checkpoint));
        CHECK(line_count(res.log_path) == 3);  // header + one row per epoch

        // the last checkpoint evaluated on the training split matches the final
        // logged validation row (same data, same fixed plans)
        EvalOptions eopt;
        eopt.split = "train";
        EvalReport rep = evaluate(res.last_checkpoint, spec, eopt, dir);
        CHECK(rep.rmse <= res.history.back().val_rmse + 1e-6);
        CHECK(rep.n_maps == 8);
    }
    SUBCASE("same seed reproduces the run; another seed changes it") {
        const std::string d1 = scratch("det1"), d2 = scratch("det2"), d3 = scratch("det3");
        TrainResult r1 = train(tiny_run(d1, 5), spec);
        TrainResult r2 = train(tiny_run(d2, 5), spec);
        TrainResult r3 = train(tiny_run(d3, 6), spec);
        CHECK(r1.history.back().train_loss == r2.history.back().train_loss);
        CHECK(r1.history.back().val_rmse == r2.history.back().val_rmse);
        CHECK(r1.history.back().train_loss != r3.history.back().train_loss);
    }
    SUBCASE("resume reproduces the uninterrupted run") {
        const std::string da = scratch("resume_a"), db = scratch("resume_b");
        RunConfig straight = tiny_run(da, 8);
        straight.epochs = 3;
        TrainResult ra = train(straight, spec);

        RunConfig part = tiny_run(db, 8);
        part.epochs = 3;
        part.epoch_limit = 2;  // interrupt after two epochs
        TrainResult rb1 = train(part, spec);
        CHECK(rb1.epochs_run == 2);

        RunConfig rest = part;
        rest.epoch_limit = 0;
        rest.resume_from = rb1.last_checkpoint;
        TrainResult rb2 = train(rest, spec);
        CHECK(rb2.epochs_run == 1);
        CHECK(rb2.history.back().epoch == 3);
        CHECK(std::abs(rb2.history.back().train_loss - ra.history.back().train_loss) <= 1e-6);
        CHECK(std::abs(rb2.history.back().val_rmse - ra.history.back().val_rmse) <= 1e-6);
        CHECK(std::abs(rb2.history.back().train_mse - ra.history.back().train_mse) <= 1e-6);
    }
    SUBCASE("config errors are itemized and resume rejects mismatched models") {
        RunConfig run = tiny_run(scratch("bad"));
        run.lr = 0.0;
        run.epochs = 0;
        try {
            run.validate();
            FAIL("expected validation failure");
        } catch (const std::invalid_argument& ex) {
            const std::string msg = ex.what();
            CHECK(msg.find("lr must be > 0") != std::string::npos);
            CHECK(msg.find("epochs must be >= 1") != std::string::npos);
        }

        const std::string dir = scratch("mismatch");
        RunConfig ok = tiny_run(dir);
        ok.epochs = 1;
        TrainResult res = train(ok, spec);
        RunConfig bigger = ok;
        bigger.model.C = 6;
        bigger.resume_from = res.last_checkpoint;
        bigger.epochs = 2;
        CHECK_THROWS_WITH_AS(train(bigger, spec), doctest::Contains("config"), std::runtime_error);
    }
    SUBCASE("run config JSON round trips") {
        RunConfig run = tiny_run("somewhere", 17);
        run.epoch_limit = 5;
        run.transfer_fraction = 0.3;
        RunConfig round = RunConfig::from_json(run.to_json());
        CHECK(round.to_json() == run.to_json());
    }
}

TEST_CASE("evaluation, baseline, and report plumbing") {
    DatasetSpec spec = tiny_spec(55, 8);
    spec.split_train = 0.5;
    spec.split_val = 0.0;
    spec.split_test = 0.5;
    const std::string dir = scratch("eval");
    RunConfig run = tiny_run(dir, 4);
    run.epochs = 1;
    TrainResult res = train(run, spec);

    SUBCASE("reports carry provenance and append to one CSV") {
        EvalOptions eopt;
        eopt.panels = true;
        eopt.panel_count = 2;
        EvalReport rep = evaluate(res.last_checkpoint, spec, eopt, dir);
        CHECK(rep.method == "radiodun");
        CHECK(rep.dataset_id == "synthetic-16x16");
        CHECK(rep.n_samples == 24);
        CHECK(rep.n_maps == 4);
        CHECK(std::isfinite(rep.rmse));
        CHECK(rep.ssim <= 1.0);
        CHECK(fs::exists(dir + "/reports/radiodun_test.json"));
        CHECK(fs::exists(dir + "/plots/radiodun_test_0_pred.png"));
        CHECK(fs::exists(dir + "/plots/radiodun_test_0_gt.png"));
        CHECK(fs::exists(dir + "/plots/radiodun_test_0_err.png"));

        EvalReport round = EvalReport::from_json(rep.to_json());
        CHECK(round.rmse == rep.rmse);
        CHECK(round.method == rep.method);

        AOConfig cfg;
        EvalReport base = baseline_evaluate(spec, cfg, EvalOptions{"test", "baseline"}, dir);
        CHECK(std::isfinite(base.rmse));
        CHECK(base.checkpoint_id == "ao-solver");
        // one header + radiodun row + baseline row, schema-stable
        CHECK(line_count(dir + "/reports/results.csv") == 3);
        std::ifstream is(dir + "/reports/results.csv");
        std::string header;
        std::getline(is, header);
        CHECK(header == EvalReport::csv_header());
    }
    SUBCASE("unknown split and empty split are rejected") {
        CHECK_THROWS_AS(evaluate(res.last_checkpoint, spec, EvalOptions{"nope"}, dir),
                        std::invalid_argument);
        CHECK_THROWS_WITH_AS(evaluate(res.last_checkpoint, spec, EvalOptions{"val"}, dir),
                             doctest::Contains("empty"), std::runtime_error);
    }
}

TEST_CASE("transfer: zero-shot copies weights bit-exactly, fine-tune runs") {
    DatasetSpec source = tiny_spec(66, 6);
    source.split_train = 1.0;
    source.split_val = 0.0;
    source.split_test = 0.0;
    const std::string dir = scratch("transfer");
    RunConfig run = tiny_run(dir, 12);
    run.epochs = 1;
    TrainResult pre = train(run, source);

    DatasetSpec target = tiny_spec(67, 6);  // shifted domain: new seed, new alpha
    target.synth.alpha = 3.0;
    target.split_train = 0.5;
    target.split_val = 0.0;
    target.split_test = 0.5;

    SUBCASE("fraction 0 is a bit-identical copy") {
        RunConfig z = run;
        z.source_checkpoint = pre.last_checkpoint;
        z.transfer_fraction = 0.0;
        TransferResult res = transfer(z, target);
        CHECK(res.report.rmse == res.zero_shot.rmse);
        const Checkpoint a = Checkpoint::load(pre.last_checkpoint);
        const Checkpoint b = Checkpoint::load(res.checkpoint);
        REQUIRE(a.params.size() == b.params.size());
        for (const auto& [name, arr] : a.params) CHECK((b.params.at(name) == arr).all());
        for (const auto& [name, arr] : a.buffers) CHECK((b.buffers.at(name) == arr).all());
    }
    SUBCASE("fine-tuning consumes the stated fraction and reports on target test") {
        RunConfig ft = run;
        ft.source_checkpoint = pre.last_checkpoint;
        ft.transfer_fraction = 0.5;
        ft.transfer_epochs = 1;
        TransferResult res = transfer(ft, target);
        CHECK(fs::exists(res.checkpoint));
        CHECK(std::isfinite(res.report.rmse));
        CHECK(res.report.method == "transfer");
        CHECK(res.zero_shot.method == "transfer-zero-shot");
        CHECK(res.report.n_maps == 3);
    }
    SUBCASE("a missing source checkpoint is rejected") {
        RunConfig bad = run;
        CHECK_THROWS_WITH_AS(transfer(bad, target), doctest::Contains("source_checkpoint"),
                             std::invalid_argument);
    }
}

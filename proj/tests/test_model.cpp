#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "radiodun/model.hpp"
#include "radiodun/nn/optim.hpp"
#include "radiodun/objectives.hpp"
#include "radiodun/scene.hpp"
#include "radiodun/solver.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace radiodun;
using nn::Array;
using nn::Shape;
using nn::Tensor;

namespace {

GridMap random_grid(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    GridMap g(h, w);
    for (size_t i = 0; i < g.size(); ++i) g[i] = dist(rng);
    return g;
}

/// A toy instance: binary obstacle priors, distance prior, observations sampled
/// from a synthetic map.
ModelInput toy_input(int h, int w, int m, int n_samples, uint64_t seed) {
    SceneGrid scene;
    scene.h = h;
    scene.w = w;
    scene.tx_x = 1 + static_cast<int>(seed % static_cast<uint64_t>(h));
    scene.tx_y = 1 + static_cast<int>((seed / 7) % static_cast<uint64_t>(w));
    std::mt19937_64 rng(seed * 31 + 5);
    for (int c = 0; c < m; ++c) {
        GridMap obs(h, w);
        for (size_t i = 0; i < obs.size(); ++i) obs[i] = (rng() % 5 == 0) ? 1.0 : 0.0;
        scene.obstacle_maps.push_back(obs);
    }
    RadioMap map = synth_radio_map(scene, 2.0, 0.5, 0.05, seed);

    ModelInput in;
    in.plan = build_plan(PlanKind::uniform_random, n_samples, h, w, seed + 1);
    in.y = sample(map, in.plan, 0.0, seed + 2).values;
    in.priors.push_back(distance_map(scene.tx_x, scene.tx_y, h, w));
    for (const GridMap& obs : scene.obstacle_maps) in.priors.push_back(obs);
    return in;
}

void zero_param(nn::ParamStore& ps, const std::string& name) {
    Tensor t = ps.get(name);
    t.mutable_value().setZero();
}

/// Central finite differences on a named parameter of a live model, against the
/// gradient recorded by one backward pass.
void fd_check_params(nn::ParamStore& ps, const std::vector<std::string>& names,
                     const std::function<double()>& loss_value,
                     const std::function<Tensor()>& loss_tensor, int coords_per_param = 3,
                     double tol = 1e-3, double h = 1e-4) {
    ps.zero_grad();
    loss_tensor().backward();
    for (const std::string& name : names) {
        Tensor p = ps.get(name);
        REQUIRE(p.requires_grad());
        const Array grad =
            p.grad().size() ? p.grad() : Array::Zero(static_cast<long>(p.numel()));
        const long stride = std::max<long>(1, static_cast<long>(p.numel()) / coords_per_param);
        for (long j = 0; j < static_cast<long>(p.numel()); j += stride) {
            const double orig = p.value()(j);
            p.mutable_value()(j) = orig + h;
            const double lp = loss_value();
            p.mutable_value()(j) = orig - h;
            const double lm = loss_value();
            p.mutable_value()(j) = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double g = grad(j);
            INFO("param ", name, " coord ", j, " analytic ", g, " fd ", fd);
            CHECK(std::abs(g - fd) <= tol * std::max({std::abs(g), std::abs(fd), 1.0}));
        }
    }
    ps.zero_grad();
}

}  // namespace

TEST_CASE("ModelConfig validation and JSON round trip") {
    ModelConfig cfg;
    cfg.K = 2;
    cfg.C = 8;
    cfg.m = 2;
    cfg.unet_depth = 2;
    cfg.base_channels = 8;
    cfg.H = 32;
    cfg.W = 32;
    CHECK_NOTHROW(cfg.validate());

    ModelConfig round = ModelConfig::from_json(cfg.to_json());
    CHECK(round.K == cfg.K);
    CHECK(round.C == cfg.C);
    CHECK(round.m == cfg.m);
    CHECK(round.unet_depth == cfg.unet_depth);
    CHECK(round.base_channels == cfg.base_channels);
    CHECK(round.H == cfg.H);
    CHECK(round.W == cfg.W);
    CHECK(round.drm_counterpart == cfg.drm_counterpart);

    auto broken = [&](auto mutate) {
        ModelConfig c = cfg;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    };
    broken([](ModelConfig& c) { c.K = 0; });
    broken([](ModelConfig& c) { c.C = 0; });
    broken([](ModelConfig& c) { c.m = 0; });
    broken([](ModelConfig& c) { c.unet_depth = 0; });
    broken([](ModelConfig& c) { c.base_channels = 0; });
    broken([](ModelConfig& c) { c.H = 1; });
    broken([](ModelConfig& c) { c.H = 33; });  // odd: fails the 2^(depth-1) divisibility
}

TEST_CASE("GDM with frozen scalars matches the classical ao_step") {
    for (int m : {0, 1, 2}) {
        for (uint64_t seed : {11u, 12u, 13u, 14u}) {
            const int h = 8, w = 8;
            FactorStack stack;
            for (int i = 0; i <= m; ++i)
                stack.factors.push_back(random_grid(h, w, seed * 10 + static_cast<uint64_t>(i), -0.5, 1.0));
            SamplingPlan plan = build_plan(PlanKind::uniform_random, 16, h, w, seed);
            std::vector<double> y;
            std::mt19937_64 rng(seed + 99);
            std::uniform_real_distribution<double> dist(0.0, 1.0);
            for (int k = 0; k < plan.count(); ++k) y.push_back(dist(rng));

            AOConfig cfg;
            cfg.beta.clear();
            for (int i = 0; i <= m; ++i) cfg.beta.push_back(0.1 + 0.17 * i);
            cfg.epsilon = 0.02;
            FactorStack want = ao_step(stack, y, plan, cfg);

            nn::ParamStore ps(seed);
            Gdm gdm(ps, "gdm", m);
            gdm.set_scalars(cfg.beta, cfg.epsilon);
            std::vector<Tensor> factors;
            for (const GridMap& f : stack.factors) factors.push_back(batch_from_grids({f}));
            std::vector<Tensor> got =
                gdm.forward(factors, mask_tensor(plan), scatter_tensor(y, plan));

            REQUIRE(got.size() == want.factors.size());
            for (size_t i = 0; i < got.size(); ++i) {
                const GridMap g = grid_from_batch(got[i], 0);
                double max_diff = 0.0;
                for (size_t p = 0; p < g.size(); ++p)
                    max_diff = std::max(max_diff, std::abs(g[p] - want.factors[i][p]));
                INFO("m ", m, " seed ", seed, " factor ", i);
                CHECK(max_diff <= 1e-10);
            }
        }
    }
}

TEST_CASE("GDM scalar round trips and the zero/zero identity") {
    nn::ParamStore ps(3);
    Gdm gdm(ps, "gdm", 1);

    SUBCASE("set_scalars round trips through the softplus") {
        gdm.set_scalars({0.25, 0.75}, 0.125);
        CHECK(gdm.betas()[0] == 0.25);
        CHECK(gdm.betas()[1] == 0.75);
        CHECK(gdm.epsilon() == doctest::Approx(0.125).epsilon(1e-12));
        gdm.set_scalars({0.0, 0.0}, 0.0);
        CHECK(gdm.epsilon() <= 1e-300);
        CHECK_THROWS_AS(gdm.set_scalars({0.1}, 0.1), std::invalid_argument);
        CHECK_THROWS_AS(gdm.set_scalars({0.1, 0.1}, -0.5), std::invalid_argument);
    }
    SUBCASE("beta = 0 and eps = 0 leave the stack untouched") {
        gdm.set_scalars({0.0, 0.0}, 0.0);
        SamplingPlan plan = build_plan(PlanKind::grid, 4, 6, 6, 0);
        std::vector<double> y(4, 0.3);
        std::vector<Tensor> factors = {batch_from_grids({random_grid(6, 6, 21, -1.0, 1.0)}),
                                       batch_from_grids({random_grid(6, 6, 22, -1.0, 1.0)})};
        std::vector<Tensor> out = gdm.forward(factors, mask_tensor(plan), scatter_tensor(y, plan));
        for (size_t i = 0; i < out.size(); ++i)
            CHECK((out[i].value() - factors[i].value()).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("GDM scalar gradients match finite differences away from kinks") {
    const int h = 8, w = 8;
    nn::ParamStore ps(5);
    Gdm gdm(ps, "gdm", 1);
    gdm.set_scalars({0.3, 0.6}, 0.05);

    SamplingPlan plan = build_plan(PlanKind::uniform_random, 20, h, w, 77);
    std::vector<double> y;
    std::mt19937_64 rng(78);
    std::uniform_real_distribution<double> dist(0.2, 1.0);
    for (int k = 0; k < plan.count(); ++k) y.push_back(dist(rng));
    // factor values well away from the |z| = eps kink for the chosen scalars
    std::vector<Tensor> factors = {batch_from_grids({random_grid(h, w, 31, 0.3, 1.0)}),
                                   batch_from_grids({random_grid(h, w, 32, 0.3, 1.0)})};

    Tensor w_loss = Tensor::from_array({1, 1, h, w},
                                       [&] {
                                           std::mt19937_64 r(99);
                                           std::uniform_real_distribution<double> d(0.1, 1.0);
                                           Array a(h * w);
                                           for (long i = 0; i < a.size(); ++i) a(i) = d(r);
                                           return a;
                                       }());
    auto loss_tensor = [&] {
        std::vector<Tensor> out = gdm.forward(factors, mask_tensor(plan), scatter_tensor(y, plan));
        Tensor acc = nn::sum_all(nn::mul(out[0], w_loss));
        return nn::add(acc, nn::sum_all(nn::mul(out[1], w_loss)));
    };
    auto loss_value = [&] { return loss_tensor().item(); };
    fd_check_params(ps, {"gdm.beta0", "gdm.beta1", "gdm.eps_raw"}, loss_value, loss_tensor);
}

TEST_CASE("InitModule shapes, determinism, and weight gradients") {
    const int h = 8, w = 8, m = 2, C = 4;
    nn::ParamStore ps(7);
    InitModule init(ps, "init", m, C);

    ModelInput in = toy_input(h, w, m, 12, 50);
    Tensor y_scat = scatter_tensor(in.y, in.plan);
    Tensor mask = mask_tensor(in.plan);
    std::vector<Tensor> priors;
    for (const GridMap& p : in.priors) priors.push_back(batch_from_grids({p}));

    ps.set_training(false);
    auto [factors, x0, v0] = init.forward(y_scat, mask, priors);
    CHECK(factors.size() == static_cast<size_t>(m + 1));
    for (const Tensor& f : factors) CHECK(f.shape() == Shape{1, 1, h, w});
    CHECK(x0.shape() == Shape{1, 1, h, w});
    CHECK(v0.shape() == Shape{1, C, h, w});

    SUBCASE("all-zero inputs give the finite, repeatable bias response") {
        Tensor zy = Tensor::zeros({1, 1, h, w});
        std::vector<Tensor> zp(static_cast<size_t>(m + 1), Tensor::zeros({1, 1, h, w}));
        auto [f1, x1, v1] = init.forward(zy, zy, zp);
        auto [f2, x2, v2] = init.forward(zy, zy, zp);
        CHECK(x1.value().isFinite().all());
        CHECK(v1.value().isFinite().all());
        CHECK((x1.value() - x2.value()).abs().maxCoeff() == 0.0);
        CHECK((v1.value() - v2.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("wrong prior count is rejected") {
        std::vector<Tensor> two(priors.begin(), priors.begin() + 2);
        CHECK_THROWS_AS(init.forward(y_scat, mask, two), std::invalid_argument);
    }
    SUBCASE("gradient of sum(X^0) w.r.t. convolution weights") {
        ps.set_training(true);
        auto loss_tensor = [&] {
            auto [f, x, v] = init.forward(y_scat, mask, priors);
            return nn::sum_all(x);
        };
        auto loss_value = [&] { return loss_tensor().item(); };
        fd_check_params(ps,
                        {"init.f0.b1.conv.w", "init.f1.b2.conv.w", "init.f2.b1.conv.w",
                         "init.x0.conv.w", "init.x0.bn.gamma", "init.v0.b1.conv.w"},
                        loss_value, loss_tensor);
    }
}

TEST_CASE("CAM attention rows are stochastic and the 1-channel case is transparent") {
    SUBCASE("rows of the attention map sum to 1") {
        nn::ParamStore ps(9);
        Cam cam(ps, "cam", 4);
        ps.set_training(false);
        Tensor f = batch_from_grids({random_grid(6, 6, 60)});
        // lift the single map to 4 channels by concatenation of shifted copies
        std::vector<Tensor> chans;
        for (int c = 0; c < 4; ++c)
            chans.push_back(batch_from_grids({random_grid(6, 6, 61 + static_cast<uint64_t>(c))}));
        Tensor x = nn::concat_channels(chans);
        Tensor a = cam.attention(x);
        CHECK(a.shape() == Shape{1, 1, 4, 4});
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 4; ++c) {
                CHECK(a.at(0, 0, r, c) > 0.0);
                sum += a.at(0, 0, r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("single channel: A = [[1]] and the output is exactly the value path") {
        nn::ParamStore ps(10);
        Cam cam(ps, "cam", 1);
        ps.set_training(false);
        Tensor x = batch_from_grids({random_grid(5, 5, 62)});
        Tensor a = cam.attention(x);
        CHECK(a.shape() == Shape{1, 1, 1, 1});
        CHECK(a.item() == 1.0);
        CHECK(cam.forward(x).shape() == Shape{1, 1, 5, 5});
    }
}

TEST_CASE("CAM 2-channel hand computation with identity projections") {
    nn::ParamStore ps(11);
    Cam cam(ps, "cam", 2);
    ps.set_training(false);

    // identity 1x1 projections, center-tap depthwise kernels, neutral norms
    auto set_identity_pw = [&](const std::string& name) {
        Tensor t = ps.get(name);  // {2,2,1,1}
        t.mutable_value() << 1.0, 0.0, 0.0, 1.0;
    };
    auto set_center_dw = [&](const std::string& name) {
        Tensor t = ps.get(name);  // {2,1,3,3}
        t.mutable_value().setZero();
        t.mutable_value()(4) = 1.0;
        t.mutable_value()(13) = 1.0;
    };
    for (std::string tok : {"q", "k", "v"}) {
        set_identity_pw("cam." + tok + "_pw.conv.w");
        set_center_dw("cam." + tok + "_dw.conv.w");
    }

    // channel 0 = [1, 3], channel 1 = [2, 1] over a 1x2 spatial grid
    Array vals(4);
    vals << 1.0, 3.0, 2.0, 1.0;
    Tensor f = Tensor::from_array({1, 2, 1, 2}, vals);

    // hand calculation with plain double arithmetic
    const double bn_scale = 1.0 / std::sqrt(1.0 + 1e-5);  // eval-mode bn with (0,1) stats
    auto leaky = [](double x) { return x >= 0.0 ? x : 0.01 * x; };
    auto block_path = [&](double x) { return leaky(leaky(x * bn_scale) * bn_scale); };
    double token[2][2];  // token[channel][position]
    for (int p = 0; p < 2; ++p) {
        const double a = vals(p), b = vals(2 + p);
        const double mean = 0.5 * (a + b);
        const double var = 0.5 * ((a - mean) * (a - mean) + (b - mean) * (b - mean));
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        token[0][p] = block_path((a - mean) * inv);
        token[1][p] = block_path((b - mean) * inv);
    }
    double logits[2][2];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            logits[r][c] = token[r][0] * token[c][0] + token[r][1] * token[c][1];
    double a_hand[2][2];
    for (int r = 0; r < 2; ++r) {
        const double mx = std::max(logits[r][0], logits[r][1]);
        const double e0 = std::exp(logits[r][0] - mx), e1 = std::exp(logits[r][1] - mx);
        a_hand[r][0] = e0 / (e0 + e1);
        a_hand[r][1] = e1 / (e0 + e1);
    }
    double out_hand[2][2];
    for (int r = 0; r < 2; ++r)
        for (int p = 0; p < 2; ++p)
            out_hand[r][p] = a_hand[r][0] * token[0][p] + a_hand[r][1] * token[1][p];

    Tensor a = cam.attention(f);
    Tensor out = cam.forward(f);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK(a.at(0, 0, r, c) == doctest::Approx(a_hand[r][c]).epsilon(1e-12));
    for (int r = 0; r < 2; ++r)
        for (int p = 0; p < 2; ++p)
            CHECK(out.at(0, r, 0, p) == doctest::Approx(out_hand[r][p]).epsilon(1e-12));
}

TEST_CASE("stage block: shape, shortcuts by construction, gradients") {
    const int C = 4, h = 8, w = 8;
    nn::ParamStore ps(12);
    StageBlock stage(ps, "st", C);
    ps.set_training(false);

    std::vector<Tensor> chans;
    for (int c = 0; c < C; ++c)
        chans.push_back(batch_from_grids({random_grid(h, w, 70 + static_cast<uint64_t>(c))}));
    Tensor f = nn::concat_channels(chans);

    Tensor out = stage.forward(f);
    CHECK(out.shape() == f.shape());

    SUBCASE("dead parallel paths expose both shortcuts exactly") {
        // zero every path that feeds the two additions; only the shortcuts remain
        zero_param(ps, "st.conv.conv.w");
        for (std::string tok : {"q", "k", "v"}) {
            zero_param(ps, "st.cam." + tok + "_pw.conv.w");
            zero_param(ps, "st.cam." + tok + "_dw.conv.w");
        }
        zero_param(ps, "st.ffn3.conv.w");
        Tensor passthrough = stage.forward(f);
        CHECK((passthrough.value() - f.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("gradient check across the stage block") {
        ps.set_training(true);
        auto loss_tensor = [&] {
            Tensor o = stage.forward(f);
            return nn::mean_all(nn::mul(o, o));
        };
        auto loss_value = [&] { return loss_tensor().item(); };
        fd_check_params(ps,
                        {"st.conv.conv.w", "st.cam.q_pw.conv.w", "st.cam.v_dw.conv.w",
                         "st.cam.ln.gamma", "st.ffn1.conv.w", "st.ffn3.bn.beta"},
                        loss_value, loss_tensor);
    }
}

TEST_CASE("DRM: attention ranges, zero-feature bias response, ablation counterpart") {
    const int m = 2, C = 4, h = 8, w = 8;
    nn::ParamStore ps(13);
    Drm drm(ps, "drm", m, C, false);
    ps.set_training(false);

    std::vector<Tensor> factors;
    for (int i = 0; i <= m; ++i)
        factors.push_back(batch_from_grids({random_grid(h, w, 80 + static_cast<uint64_t>(i))}));
    std::vector<Tensor> vchans;
    for (int c = 0; c < C; ++c)
        vchans.push_back(batch_from_grids({random_grid(h, w, 90 + static_cast<uint64_t>(c), -1.0, 1.0)}));
    Tensor v_prev = nn::concat_channels(vchans);

    auto [x_rough, v_k] = drm.forward(factors, v_prev);
    CHECK(x_rough.shape() == Shape{1, 1, h, w});
    CHECK(v_k.shape() == Shape{1, C, h, w});

    SUBCASE("channel and spatial attention maps live strictly inside (0,1)") {
        auto [c_ch, c_sp] = drm.attention(v_prev);
        CHECK(c_ch.shape() == Shape{1, C, 1, 1});
        CHECK(c_sp.shape() == Shape{1, 1, h, w});
        for (long i = 0; i < static_cast<long>(c_ch.numel()); ++i) {
            CHECK(c_ch.value()(i) > 0.0);
            CHECK(c_ch.value()(i) < 1.0);
        }
        for (long i = 0; i < static_cast<long>(c_sp.numel()); ++i) {
            CHECK(c_sp.value()(i) > 0.0);
            CHECK(c_sp.value()(i) < 1.0);
        }
    }
    SUBCASE("zero previous feature: channel attention is the sigmoid of the linear bias") {
        auto [c_ch, c_sp] = drm.attention(Tensor::zeros({1, C, h, w}));
        Tensor bias = ps.get("drm.ch_linear.b");
        for (int c = 0; c < C; ++c) {
            const double want = 1.0 / (1.0 + std::exp(-bias.value()(c)));
            CHECK(c_ch.at(0, c, 0, 0) == doctest::Approx(want).epsilon(1e-12));
        }
    }
    SUBCASE("counterpart ablation passes the feature through unchanged") {
        nn::ParamStore ps2(14);
        Drm ablated(ps2, "drm", m, C, true);
        ps2.set_training(false);
        auto [x2, v2] = ablated.forward(factors, v_prev);
        CHECK(x2.shape() == Shape{1, 1, h, w});
        CHECK((v2.value() - v_prev.value()).abs().maxCoeff() == 0.0);
        // the ablation registers far fewer weights
        CHECK(ps2.param_scalar_count() < ps.param_scalar_count() / 4);
    }
    SUBCASE("gradients through the full DRM") {
        ps.set_training(true);
        auto loss_tensor = [&] {
            auto [x, v] = drm.forward(factors, v_prev);
            return nn::mean_all(nn::mul(x, x));
        };
        auto loss_value = [&] { return loss_tensor().item(); };
        fd_check_params(ps,
                        {"drm.lift.b1.conv.w", "drm.ch_linear.w", "drm.ch_linear.b",
                         "drm.sp.conv.w", "drm.refine.conv.w", "drm.dconv.conv.w",
                         "drm.fuse.conv.w", "drm.fuse.bn.gamma"},
                        loss_value, loss_tensor);
    }
}

TEST_CASE("PMM shapes, determinism, and single-pair overfit") {
    SUBCASE("shape preservation at depth 3 on 32x32") {
        nn::ParamStore ps(15);
        Pmm pmm(ps, "pmm", 3, 4);
        ps.set_training(false);
        Tensor x = batch_from_grids({random_grid(32, 32, 100)});
        Tensor out = pmm.forward(x);
        CHECK(out.shape() == Shape{1, 1, 32, 32});
        CHECK(out.value().isFinite().all());
        Tensor again = pmm.forward(x);
        CHECK((out.value() - again.value()).abs().maxCoeff() == 0.0);
        CHECK_THROWS_AS(pmm.forward(batch_from_grids({random_grid(30, 30, 101)})),
                        std::invalid_argument);
    }
    SUBCASE("overfits one pair to MSE below 1e-5 within 500 steps at default width") {
        nn::ParamStore ps(16);
        Pmm pmm(ps, "pmm", 2, 32);
        ps.set_training(true);
        Tensor x_in = batch_from_grids({random_grid(12, 12, 102)});
        Tensor target = batch_from_grids({random_grid(12, 12, 103)});

        nn::AdamWConfig ocfg;
        ocfg.lr = 2e-3;
        ocfg.weight_decay = 0.0;
        nn::AdamW opt(ps, ocfg);
        double final_mse = 1.0;
        for (int step = 0; step < 500; ++step) {
            Tensor loss = mse_t(target, pmm.forward(x_in));
            final_mse = loss.item();
            if (final_mse < 1e-5) break;
            loss.backward();
            opt.step();
        }
        CHECK(final_mse < 1e-5);
    }
}

TEST_CASE("shadow head uses only obstacle factors") {
    const int m = 2, h = 8, w = 8;
    nn::ParamStore ps(17);
    ShadowHead head(ps, "shadow", m);
    ps.set_training(false);

    std::vector<Tensor> factors;
    for (int i = 0; i <= m; ++i)
        factors.push_back(batch_from_grids({random_grid(h, w, 110 + static_cast<uint64_t>(i))}));
    Tensor out = head.forward(factors);
    CHECK(out.shape() == Shape{1, 1, h, w});

    SUBCASE("distance factor is ignored") {
        std::vector<Tensor> changed = factors;
        changed[0] = batch_from_grids({random_grid(h, w, 120)});
        Tensor out2 = head.forward(changed);
        CHECK((out.value() - out2.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("zero obstacle factors give a constant map") {
        std::vector<Tensor> zeros = {factors[0], Tensor::zeros({1, 1, h, w}),
                                     Tensor::zeros({1, 1, h, w})};
        Tensor out3 = head.forward(zeros);
        const double first = out3.value()(0);
        CHECK((out3.value() - first).abs().maxCoeff() == 0.0);
    }
    SUBCASE("a single factor is rejected") {
        std::vector<Tensor> only = {factors[0]};
        CHECK_THROWS_AS(head.forward(only), std::invalid_argument);
        CHECK_THROWS_AS(ShadowHead(ps, "shadow2", 0), std::invalid_argument);
    }
    SUBCASE("gradient through the head") {
        ps.set_training(true);
        auto loss_tensor = [&] {
            Tensor o = head.forward(factors);
            return nn::mean_all(nn::mul(o, o));
        };
        auto loss_value = [&] { return loss_tensor().item(); };
        fd_check_params(ps, {"shadow.conv.conv.w", "shadow.conv.bn.gamma", "shadow.conv.bn.beta"},
                        loss_value, loss_tensor);
    }
}

TEST_CASE("differentiable losses match the scalar reference implementations") {
    const int h = 6, w = 7;
    GridMap gt = random_grid(h, w, 130);
    GridMap hat = random_grid(h, w, 131);
    GridMap sig = random_grid(h, w, 132, -0.5, 0.5);

    Tensor gt_t = batch_from_grids({gt});
    Tensor hat_t = batch_from_grids({hat});
    Tensor sig_t = batch_from_grids({sig});

    CHECK(mse_t(gt_t, hat_t).item() == doctest::Approx(mse(gt, hat)).epsilon(1e-13));
    CHECK(shadowing_loss_t(sig_t, gt_t, hat_t).item() ==
          doctest::Approx(shadowing_loss(sig, gt, hat)).epsilon(1e-13));
    CHECK(total_loss_t(gt_t, hat_t, sig_t, 1.0).item() ==
          doctest::Approx(total_loss(gt, hat, sig, 1.0)).epsilon(1e-13));
    CHECK(total_loss_t(gt_t, hat_t, sig_t, 0.0).item() ==
          doctest::Approx(shadowing_loss(sig, gt, hat)).epsilon(1e-13));
    CHECK_THROWS_AS(total_loss_t(gt_t, hat_t, sig_t, -1.0), std::invalid_argument);

    SUBCASE("batch version averages the per-sample losses") {
        GridMap gt2 = random_grid(h, w, 133);
        GridMap hat2 = random_grid(h, w, 134);
        GridMap sig2 = random_grid(h, w, 135, -0.5, 0.5);
        const double want = 0.5 * (shadowing_loss(sig, gt, hat) + shadowing_loss(sig2, gt2, hat2));
        CHECK(shadowing_loss_t(batch_from_grids({sig, sig2}), batch_from_grids({gt, gt2}),
                               batch_from_grids({hat, hat2}))
                  .item() == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("RadioDUN forward: shapes, history, purity, parameter scaling") {
    ModelConfig cfg;
    cfg.K = 2;
    cfg.C = 4;
    cfg.m = 2;
    cfg.unet_depth = 2;
    cfg.base_channels = 4;
    cfg.H = 8;
    cfg.W = 8;

    RadioDUN model(cfg, 42);
    model.set_train(false);
    ModelInput in = toy_input(8, 8, 2, 12, 140);

    ForwardResult out = model.forward({in});
    CHECK(out.x_hat.shape() == Shape{1, 1, 8, 8});
    CHECK(out.x_sigma.shape() == Shape{1, 1, 8, 8});
    CHECK(out.history.size() == static_cast<size_t>(cfg.K + 1));
    CHECK(out.factors.size() == static_cast<size_t>(cfg.m + 1));
    CHECK(out.x_hat.value().isFinite().all());

    SUBCASE("evaluation is bit-identical across calls") {
        ForwardResult again = model.forward({in});
        CHECK((out.x_hat.value() - again.x_hat.value()).abs().maxCoeff() == 0.0);
        CHECK((out.x_sigma.value() - again.x_sigma.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("output depends only on sampled cells of the source map") {
        // two maps that agree on the sampled cells produce identical observations
        RadioMap a;
        a.values = random_grid(8, 8, 141);
        RadioMap b = a;
        for (int i = 0; i < 64; ++i) {
            bool sampled = false;
            for (int idx : in.plan.indices) sampled = sampled || idx == i;
            if (!sampled) b.values[static_cast<size_t>(i)] += 0.37;
        }
        ModelInput ia = in, ib = in;
        ia.y = sample(a, in.plan, 0.0, 1).values;
        ib.y = sample(b, in.plan, 0.0, 2).values;
        ForwardResult ra = model.forward({ia});
        ForwardResult rb = model.forward({ib});
        CHECK((ra.x_hat.value() - rb.x_hat.value()).abs().maxCoeff() == 0.0);
    }
    SUBCASE("batched forward equals per-sample forward in eval mode") {
        ModelInput in2 = toy_input(8, 8, 2, 9, 150);
        ForwardResult single1 = model.forward({in});
        ForwardResult single2 = model.forward({in2});
        ForwardResult both = model.forward({in, in2});
        const GridMap b0 = grid_from_batch(both.x_hat, 0);
        const GridMap b1 = grid_from_batch(both.x_hat, 1);
        CHECK(rmse_between(b0, grid_from_batch(single1.x_hat, 0)) <= 1e-12);
        CHECK(rmse_between(b1, grid_from_batch(single2.x_hat, 0)) <= 1e-12);
    }
    SUBCASE("per-block parameters scale linearly with K") {
        auto count = [&](int K) {
            ModelConfig c = cfg;
            c.K = K;
            RadioDUN mm(c, 1);
            return mm.params().param_scalar_count();
        };
        const size_t p1 = count(1), p2 = count(2), p3 = count(3);
        CHECK(p2 - p1 == p3 - p2);
        CHECK(p2 > p1);
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(model.forward({}), std::invalid_argument);
        ModelInput bad = in;
        bad.priors.pop_back();
        CHECK_THROWS_AS(model.forward({bad}), std::invalid_argument);
        ModelInput bad2 = in;
        bad2.y.pop_back();
        CHECK_THROWS_AS(model.forward({bad2}), std::invalid_argument);
        ModelInput bad3 = toy_input(16, 16, 2, 9, 151);
        CHECK_THROWS_AS(model.forward({bad3}), std::invalid_argument);
    }
}

TEST_CASE("end-to-end gradients of the total loss on an 8x8 toy model") {
    ModelConfig cfg;
    cfg.K = 1;
    cfg.C = 3;
    cfg.m = 1;
    cfg.unet_depth = 1;
    cfg.base_channels = 3;
    cfg.H = 8;
    cfg.W = 8;

    RadioDUN model(cfg, 7);
    model.set_train(true);
    model.set_gdm_scalars(0, {0.4, 0.4}, 0.0);  // identity threshold keeps the loss smooth

    ModelInput in = toy_input(8, 8, 1, 12, 160);
    Tensor gt = batch_from_grids({random_grid(8, 8, 161)});

    auto loss_tensor = [&] {
        ForwardResult out = model.forward({in});
        return total_loss_t(gt, out.x_hat, out.x_sigma, 1.0);
    };
    auto loss_value = [&] { return loss_tensor().item(); };

    // one representative parameter from every submodule family
    fd_check_params(model.params(),
                    {"init.f0.b1.conv.w", "init.x0.conv.w", "block0.gdm.beta0",
                     "block0.drm.lift.b2.conv.w", "block0.drm.ch_linear.w",
                     "block0.pmm.entry.conv.w", "block0.pmm.enc0.cam.q_pw.conv.w",
                     "block0.pmm.enc0.ffn2.conv.w", "block0.pmm.head.w", "block0.pmm.head.b",
                     "shadow.conv.conv.w"},
                    loss_value, loss_tensor, 2, 1e-3, 1e-5);
}

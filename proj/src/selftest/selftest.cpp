#include "fluoro/selftest/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <random>

#include "fluoro/errors.hpp"
#include "fluoro/fusion/fusion.hpp"
#include "fluoro/metrics/metrics.hpp"
#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/ops.hpp"
#include "fluoro/numerics/precision.hpp"
#include "fluoro/pipeline/bag_io.hpp"
#include "fluoro/pipeline/foreground.hpp"
#include "fluoro/pooling/pooling.hpp"
#include "fluoro/reference/reference.hpp"
#include "fluoro/survival/survival.hpp"
#include "fluoro/trainer/adamw.hpp"
#include "fluoro/trainer/checkpoint.hpp"
#include "fluoro/trainer/model.hpp"

namespace fluoro::selftest {

namespace {

using nx::Tensor;

Tensor random_tensor(nx::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(nx::numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::unique_ptr<bool[]> random_flags(std::size_t n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution b(p);
    auto flags = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) flags[i] = b(rng);
    return flags;
}

}  // namespace

std::vector<GradientCase> gradient_suite(std::uint64_t seed) {
    nx::PrecisionScope exact(nx::Precision::f64);
    std::mt19937_64 rng(seed);
    constexpr std::size_t K = 2, M = 3, E = 8, H = 4, B = 4, A = 6;
    std::vector<GradientCase> out;

    auto run = [&](const std::string& name, const std::vector<nx::NamedTensor>& leaves,
                   const std::function<Tensor()>& f) {
        const auto report = nx::check_gradients(f, leaves);
        const auto* worst = report.worst();
        out.push_back({name, report.worst_rel_error(), worst ? worst->name : ""});
    };
    auto unary = [&](const std::string& name, nx::Shape shape, const std::function<Tensor(const Tensor&)>& op,
                     double lo = -1.0, double hi = 1.0) {
        auto x = random_tensor(shape, rng, lo, hi);
        auto probe = op(x.detach());
        auto w = random_tensor(probe.shape(), rng).detach();
        run(name, {{"x", x}}, [&] { return nx::sum(nx::hadamard(op(x), w)); });
    };
    auto binary = [&](const std::string& name, nx::Shape sa, nx::Shape sb,
                      const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
        auto a = random_tensor(sa, rng), b = random_tensor(sb, rng);
        auto w = random_tensor(op(a.detach(), b.detach()).shape(), rng).detach();
        run(name, {{"a", a}, {"b", b}}, [&] { return nx::sum(nx::hadamard(op(a, b), w)); });
    };

    binary("matmul", {3, 4}, {4, 2}, nx::matmul);
    binary("bmm", {2, 3, 4}, {2, 4, 3}, nx::bmm);
    binary("add", {3, 4}, {3, 4}, nx::add);
    binary("sub", {3, 4}, {3, 4}, nx::sub);
    binary("hadamard", {3, 4}, {3, 4}, nx::hadamard);
    binary("add_bias", {2, 3, 4}, {4}, nx::add_bias);
    unary("transpose", {2, 3, 4}, nx::transpose);
    unary("reshape", {2, 3, 4}, [](const Tensor& x) { return nx::reshape(x, {6, 4}); });
    unary("scale", {5}, [](const Tensor& x) { return nx::scale(x, -1.7); });
    unary("add_scalar", {5}, [](const Tensor& x) { return nx::add_scalar(x, 0.3); });
    unary("tanh", {2, 5}, nx::tanh);
    unary("sigmoid", {2, 5}, nx::sigm);
    unary("gelu", {2, 5}, nx::gelu, -3.0, 3.0);
    unary("log", {6}, [](const Tensor& x) { return nx::log_clamped(x, 1e-12); }, 0.1, 1.0);
    unary("softmax", {2, 3, 4}, [](const Tensor& x) { return nx::softmax(x, 2); });
    unary("softmax_axis0", {5, 2}, [](const Tensor& x) { return nx::softmax(x, 0); });
    unary("mean", {2, 3, 4}, [](const Tensor& x) { return nx::mean(x, 1); });
    unary("sum", {2, 3}, nx::sum);
    unary("cumprod", {5}, nx::cumprod, 0.2, 0.9);
    unary("index", {5}, [](const Tensor& x) { return nx::index(x, 3); });
    {
        auto x = random_tensor({3, 2, 5}, rng), g = random_tensor({5}, rng), b = random_tensor({5}, rng);
        auto w = random_tensor({3, 2, 5}, rng).detach();
        run("normalize", {{"x", x}, {"gamma", g}, {"beta", b}},
            [&] { return nx::sum(nx::hadamard(nx::normalize_last(x, g, b, 1e-5), w)); });
    }
    {
        auto x = random_tensor({3, 4}, rng);
        auto layer = nx::Linear::init(4, 5, rng);
        layer.weight = layer.weight.clone(true);
        layer.bias = layer.bias.clone(true);
        auto w = random_tensor({3, 5}, rng).detach();
        run("linear", {{"x", x}, {"weight", layer.weight}, {"bias", layer.bias}},
            [&] { return nx::sum(nx::hadamard(nx::linear(x, layer), w)); });
    }

    // Model pieces. Parameters from init are leaves that require gradients.
    trainer::TrainConfig cfg;
    cfg.hidden_dim = H;
    cfg.attention_dim = A;
    cfg.num_bins = B;
    cfg.precision = nx::Precision::f64;
    const auto model = trainer::Model::init(cfg, E, seed);
    auto params = model.named_parameters();
    const auto& fp = *model.fusion_params();
    auto Hx = random_tensor({K, M, E}, rng);
    std::vector<nx::NamedTensor> fusion_leaves = fp.named_parameters();
    fusion_leaves.push_back({"H", Hx});

    {
        auto w = random_tensor({K, M, H}, rng).detach();
        run("contract", fusion_leaves, [&] { return nx::sum(nx::hadamard(fusion::contract(Hx, fp), w)); });
    }
    {
        auto c = random_tensor({K, M, H}, rng);
        auto w = random_tensor({K, M, H}, rng).detach();
        auto wa = random_tensor({K, M, M}, rng).detach();
        auto leaves = fp.named_parameters();
        leaves.push_back({"contracted", c});
        run("marker_sdpa", leaves, [&] {
            auto s = fusion::marker_sdpa(c, fp);
            return nx::add(nx::sum(nx::hadamard(s.mixed, w)), nx::sum(nx::hadamard(s.attention, wa)));
        });
    }
    {
        auto w = random_tensor({K, E}, rng).detach();
        run("fuse", fusion_leaves, [&] { return nx::sum(nx::hadamard(fusion::fuse(Hx, fp).fused, w)); });
    }
    {
        auto f = random_tensor({K, E}, rng);
        auto w = random_tensor({B}, rng).detach();
        std::mt19937_64 prng(seed + 2);
        auto ga = pooling::GatedAttentionParams::init(E, A, prng);
        auto cl = pooling::ClassifierParams::init(E, B, prng);
        auto pl = ga.named_parameters();
        for (auto& p : cl.named_parameters()) pl.push_back(p);
        pl.push_back({"fused", f});
        run("pool_classify", pl, [&] {
            return nx::sum(nx::hadamard(pooling::pool_and_classify(f, ga, cl).logits, w));
        });
        auto wa = random_tensor({K}, rng).detach();
        run("gated_attention", pl, [&] { return nx::sum(nx::hadamard(pooling::gated_attention(f, ga), wa)); });
    }
    {
        auto logits = random_tensor({B}, rng, -2.0, 2.0);
        for (std::size_t bin = 0; bin < B; ++bin) {
            for (bool censored : {false, true}) {
                survival::SurvivalTarget t{1.0, censored, bin};
                run("nll bin " + std::to_string(bin) + (censored ? " censored" : " event"), {{"logits", logits}},
                    [&] { return survival::nll_loss(survival::hazards_from_logits(logits), t); });
            }
        }
        run("risk", {{"logits", logits}}, [&] {
            return survival::risk_score(survival::survival_curve(survival::hazards_from_logits(logits)));
        });
    }
    for (bool censored : {false, true}) {
        survival::SurvivalTarget t{1.0, censored, 2};
        auto leaves = params;
        leaves.push_back({"H", Hx});
        run(std::string("composite ") + (censored ? "censored" : "event"), leaves, [&] {
            return survival::nll_loss(model.forward(Hx).hazards, t);
        });
    }
    return out;
}

std::vector<CheckResult> oracle_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> out;

    {
        CheckResult r{"c_index vs brute force", true, ""};
        for (int trial = 0; trial < 100 && r.passed; ++trial) {
            const std::size_t n = 2 + rng() % 49;
            std::vector<double> s(n), t(n);
            for (auto& x : s) x = static_cast<double>(rng() % 10);
            for (auto& x : t) x = static_cast<double>(rng() % 20);
            auto c = random_flags(n, 0.3, rng);
            std::span<const bool> cs(c.get(), n);
            const auto [conc, comp] = reference::brute_concordance(s, t, cs);
            const auto got = metrics::concordance_counts(s, t, cs);
            if (got.comparable != comp || got.concordant != conc) {
                r.passed = false;
                r.detail = "trial " + std::to_string(trial) + ": counts differ";
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"morans_i vs double loop", true, ""};
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int trial = 0; trial < 50 && r.passed; ++trial) {
            metrics::HeatmapGrid g;
            g.rows = 2 + rng() % 6;
            g.cols = 2 + rng() % 6;
            for (std::size_t i = 0; i < g.rows * g.cols; ++i) {
                g.values.push_back(u(rng));
                g.mask.push_back(rng() % 5 != 0);
            }
            double got = 0.0, want = 0.0;
            try {
                got = metrics::morans_i(g);
            } catch (const UndefinedMetricError&) {
                continue;
            }
            want = reference::double_loop_morans_i(g);
            if (std::abs(got - want) > 1e-12) {
                r.passed = false;
                r.detail = "deviation " + fmt("%.3g", std::abs(got - want));
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"otsu vs exhaustive", true, ""};
        for (int trial = 0; trial < 200 && r.passed; ++trial) {
            pipeline::Histogram h{};
            const int occupied = 2 + static_cast<int>(rng() % 40);
            for (int i = 0; i < occupied; ++i) h[rng() % 256] += 1 + rng() % 1000;
            int got = -2;
            try {
                got = pipeline::otsu_threshold(h);
            } catch (const DegenerateInputError&) {
                got = -1;
            }
            const int want = reference::exhaustive_otsu(h);
            if (got != want) {
                r.passed = false;
                r.detail = "threshold " + std::to_string(got) + " vs " + std::to_string(want);
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"survival head vs straight line", true, ""};
        nx::PrecisionScope exact(nx::Precision::f64);
        std::uniform_real_distribution<double> u(-4.0, 4.0);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> logits(4);
            for (auto& x : logits) x = u(rng);
            const auto bin = static_cast<std::size_t>(rng() % 4);
            const bool censored = rng() % 2;
            auto o = survival::evaluate(Tensor::from({4}, logits), {1.0, censored, bin});
            std::vector<double> hz(o.hazards.data().begin(), o.hazards.data().end());
            const auto s = reference::survival_curve(hz);
            for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(o.survival[j] - s[j]));
            worst = std::max(worst, std::abs(o.loss.item() - reference::nll(hz, bin, censored)));
            worst = std::max(worst, std::abs(o.risk.item() - reference::risk(hz)));
        }
        r.passed = worst <= 1e-10;
        r.detail = "max deviation " + fmt("%.3g", worst);
        out.push_back(r);
    }
    {
        CheckResult r{"model forward vs loop reference", true, ""};
        nx::PrecisionScope exact(nx::Precision::f64);
        trainer::TrainConfig cfg;
        cfg.hidden_dim = 4;
        cfg.attention_dim = 6;
        cfg.precision = nx::Precision::f64;
        const std::size_t K = 3, M = 4, E = 8;
        const auto model = trainer::Model::init(cfg, E, seed);
        auto H = random_tensor({K, M, E}, rng).detach();
        auto fwd = model.forward(H);
        const auto f = reference::fuse(H.data(), K, M, *model.fusion_params());
        double worst = 0.0;
        for (std::size_t i = 0; i < f.fused.size(); ++i) worst = std::max(worst, std::abs(f.fused[i] - fwd.fused[i]));
        for (std::size_t i = 0; i < f.attention.size(); ++i) {
            worst = std::max(worst, std::abs(f.attention[i] - fwd.marker_attention[i]));
        }
        // Pool on the library's fused output so the two checks stay separate.
        std::mt19937_64 prng(seed + 5);
        auto ga = pooling::GatedAttentionParams::init(E, 6, prng);
        auto cl = pooling::ClassifierParams::init(E, 4, prng);
        auto p = pooling::pool_and_classify(fwd.fused, ga, cl);
        const auto rp = reference::pool(fwd.fused.data(), K, ga, cl);
        for (std::size_t i = 0; i < K; ++i) worst = std::max(worst, std::abs(rp.attention[i] - p.attention[i]));
        for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(rp.logits[i] - p.logits[i]));
        r.passed = worst <= 1e-10;
        r.detail = "max deviation " + fmt("%.3g", worst);
        out.push_back(r);
    }
    {
        CheckResult r{"bin cutoffs vs percentile", true, ""};
        std::uniform_real_distribution<double> u(1.0, 3000.0);
        for (int trial = 0; trial < 50 && r.passed; ++trial) {
            const std::size_t n = 8 + rng() % 40;
            std::vector<double> t(n), events;
            auto c = random_flags(n, 0.3, rng);
            for (std::size_t i = 0; i < n; ++i) {
                t[i] = std::round(u(rng));
                if (!c[i]) events.push_back(t[i]);
            }
            survival::BinSpec bins;
            try {
                bins = survival::make_bins(t, std::span<const bool>(c.get(), n), 4);
            } catch (const ConfigError&) {
                continue;
            }
            for (int q = 1; q < 4; ++q) {
                if (std::abs(bins.cutoffs[q - 1] - reference::percentile(events, 25.0 * q)) > 1e-9) {
                    r.passed = false;
                    r.detail = "cutoff " + std::to_string(q) + " differs";
                }
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"adamw vs hand-rolled update", true, ""};
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> p(6), ref_p;
        for (auto& x : p) x = u(rng);
        ref_p = p;
        trainer::AdamWState state;
        reference::AdamWState ref_state;
        trainer::AdamWConfig cfg{1e-2, 0.9, 0.999, 1e-8, 0.01};
        double worst = 0.0;
        for (int step = 0; step < 3; ++step) {
            std::vector<double> g(6);
            for (auto& x : g) x = u(rng);
            trainer::adamw_step(p, g, state, cfg);
            reference::adamw(ref_p, g, ref_state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
            for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - ref_p[i]));
        }
        r.passed = worst < 1e-12;
        r.detail = "max deviation " + fmt("%.3g", worst);
        out.push_back(r);
    }
    return out;
}

std::vector<CheckResult> format_suite(std::uint64_t seed, int instances) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> out;
    {
        CheckResult r{"bag round trip", true, ""};
        std::normal_distribution<float> n01;
        for (int i = 0; i < instances && r.passed; ++i) {
            fusion::EmbeddedBag bag;
            bag.sample_id = "bag" + std::to_string(i);
            bag.num_patches = rng() % 6;
            bag.num_markers = 1 + rng() % 4;
            bag.embed_dim = 1 + rng() % 5;
            for (std::size_t m = 0; m < bag.num_markers; ++m) bag.channel_names.push_back("m" + std::to_string(rng() % 100));
            for (std::size_t k = 0; k < bag.num_patches; ++k) bag.coords.push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(rng() % 7)});
            for (std::size_t j = 0; j < bag.num_patches * bag.num_markers * bag.embed_dim; ++j) bag.embeddings.push_back(n01(rng));
            const auto bytes = pipeline::encode_bag(bag);
            try {
                const auto back = pipeline::decode_bag(bytes, bag.sample_id);
                if (!(back == bag) || pipeline::encode_bag(back) != bytes) {
                    r.passed = false;
                    r.detail = "instance " + std::to_string(i) + " differs after decode";
                }
            } catch (const Error& e) {
                r.passed = false;
                r.detail = e.what();
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"checkpoint round trip", true, ""};
        for (int i = 0; i < instances && r.passed; ++i) {
            trainer::TrainConfig cfg;
            cfg.model = rng() % 2 ? trainer::ModelKind::fluoroformer : trainer::ModelKind::channel_mean;
            cfg.hidden_dim = 1 + rng() % 3;
            cfg.attention_dim = 1 + rng() % 4;
            cfg.num_bins = 2 + rng() % 3;
            cfg.precision = rng() % 2 ? nx::Precision::f32 : nx::Precision::f64;
            cfg.seed = rng();
            const std::size_t E = cfg.hidden_dim + rng() % 4;
            const auto model = trainer::Model::init(cfg, E, rng());
            survival::BinSpec bins;
            for (std::size_t b = 1; b < cfg.num_bins; ++b) bins.cutoffs.push_back(10.0 * static_cast<double>(b) + 0.1);
            const double val = i % 3 == 0 ? std::nan("") : 0.5 + 0.001 * i;
            const auto ckpt = trainer::Checkpoint::capture(model, cfg, bins, i % 26, val);
            const auto bytes = trainer::encode_checkpoint(ckpt);
            try {
                const auto back = trainer::decode_checkpoint(bytes);
                if (trainer::encode_checkpoint(back) != bytes || back.tensors != ckpt.tensors) {
                    r.passed = false;
                    r.detail = "instance " + std::to_string(i) + " differs after decode";
                    break;
                }
                // Restored model reproduces the forward pass bit for bit.
                const auto restored = back.restore();
                nx::PrecisionScope scope(cfg.precision);
                nx::NoGradScope no_grad;
                auto H = random_tensor({2, 3, E}, rng).detach();
                const auto a = model.forward(H).logits, b = restored.forward(H).logits;
                for (std::size_t j = 0; j < a.numel(); ++j) {
                    if (std::bit_cast<std::uint64_t>(a[j]) != std::bit_cast<std::uint64_t>(b[j])) {
                        r.passed = false;
                        r.detail = "instance " + std::to_string(i) + ": restored forward differs";
                    }
                }
            } catch (const Error& e) {
                r.passed = false;
                r.detail = e.what();
            }
        }
        out.push_back(r);
    }
    {
        CheckResult r{"corrupt inputs rejected", true, ""};
        trainer::TrainConfig cfg;
        cfg.hidden_dim = 2;
        cfg.attention_dim = 3;
        const auto model = trainer::Model::init(cfg, 4, 1);
        survival::BinSpec bins{{1.0, 2.0, 3.0}};
        auto bytes = trainer::encode_checkpoint(trainer::Checkpoint::capture(model, cfg, bins, 1, 0.6));
        auto expect_format_error = [&](std::vector<std::uint8_t> b, const std::string& what) {
            try {
                trainer::decode_checkpoint(b);
                r.passed = false;
                r.detail = what + " accepted";
            } catch (const FormatError&) {
            }
        };
        auto truncated = bytes;
        truncated.pop_back();
        expect_format_error(truncated, "truncated checkpoint");
        auto extended = bytes;
        extended.push_back(0);
        expect_format_error(extended, "checkpoint with trailing bytes");
        auto versioned = bytes;
        versioned[4] = 9;
        expect_format_error(versioned, "unknown checkpoint version");
        out.push_back(r);
    }
    return out;
}

CheckResult run_all(const std::function<void(const CheckResult&)>& report) {
    CheckResult first_failure;
    auto note = [&](const CheckResult& r) {
        if (report) report(r);
        if (!r.passed && first_failure.name.empty()) first_failure = r;
    };
    for (const auto& g : gradient_suite()) {
        note({"gradient " + g.name, g.rel_error < kGradientTolerance,
              "rel error " + fmt("%.3g", g.rel_error) + (g.worst_leaf.empty() ? "" : " at " + g.worst_leaf)});
    }
    for (const auto& r : oracle_suite()) note(r);
    for (const auto& r : format_suite()) note(r);
    return first_failure;
}

}  // namespace fluoro::selftest

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "fluoro/errors.hpp"
#include "fluoro/reference/reference.hpp"
#include "fluoro/trainer/adamw.hpp"
#include "fluoro/trainer/checkpoint.hpp"
#include "fluoro/trainer/dataset.hpp"
#include "fluoro/trainer/experiment.hpp"
#include "fluoro/trainer/export.hpp"
#include "fluoro/trainer/folds.hpp"
#include "fluoro/trainer/model.hpp"
#include "fluoro/trainer/synth.hpp"
#include "fluoro/trainer/train.hpp"
#include "test_util.hpp"

using namespace fluoro;
using namespace fluoro::trainer;
using pipeline::ManifestEntry;

namespace {

SynthConfig small_synth(std::uint64_t seed) {
    SynthConfig s;
    s.num_samples = 30;
    s.num_markers = 3;
    s.embed_dim = 8;
    s.grid_rows = 2;
    s.grid_cols = 3;
    s.seed = seed;
    return s;
}

Dataset small_data(std::uint64_t seed) {
    auto c = synth_cohort(small_synth(seed));
    return Dataset::from_bags(c.manifest, c.bags);
}

TrainConfig small_config() {
    TrainConfig c;
    c.epochs = 2;
    c.folds = 3;
    c.attention_dim = 6;
    c.lr = 1e-3;
    return c;
}

std::vector<ManifestEntry> manifest_of(const std::vector<std::pair<std::string, std::string>>& ids) {
    std::vector<ManifestEntry> m;
    for (const auto& [s, p] : ids) m.push_back({s, p, 10.0, false, s + ".flbg"});
    return m;
}

}  // namespace

TEST_CASE("AdamW first step moves each weight by lr") {
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 1e-3};
    AdamWState s;
    adamw_step(p, g, s, {0.01, 0.9, 0.999, 1e-8, 0.0});
    CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-1.99).epsilon(1e-9));
    CHECK(p[2] == doctest::Approx(0.49).epsilon(1e-6));

    std::vector<double> q{1.0, -1.0};
    AdamWState z;
    adamw_step(q, std::vector<double>{0.0, 0.0}, z, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(q == std::vector<double>{1.0, -1.0});

    std::vector<double> nan_grad{std::nan("")};
    std::vector<double> r{1.0};
    AdamWState w;
    CHECK_THROWS_AS(adamw_step(r, nan_grad, w, {}), NumericError);
}

TEST_CASE("AdamW matches the reference over several steps") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g;
    std::vector<double> p(6), ref;
    for (auto& x : p) x = g(rng);
    ref = p;
    AdamWState s;
    reference::AdamWState rs;
    const AdamWConfig cfg{1e-3, 0.9, 0.999, 1e-8, 0.05};
    for (int step = 0; step < 3; ++step) {
        std::vector<double> grad(6);
        for (auto& x : grad) x = g(rng);
        adamw_step(p, grad, s, cfg);
        reference::adamw(ref, grad, rs, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    }
    CHECK(testing::max_abs_diff(p, ref) < 1e-12);
    CHECK(s.step == 3);
}

TEST_CASE("config validation and json") {
    TrainConfig c;
    CHECK(c.resolved_hidden_dim(64) == 16);
    CHECK(c.resolved_hidden_dim(2) == 1);
    CHECK(c.resolved_hidden_dim(4096) == 256);
    c.folds = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.lr = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    TrainConfig d;
    d.epochs = 7;
    d.model = ModelKind::channel_mean;
    d.precision = nx::Precision::f64;
    const auto back = config_from_json(to_json(d));
    CHECK(back.epochs == 7);
    CHECK(back.model == ModelKind::channel_mean);
    CHECK(back.precision == nx::Precision::f64);
    CHECK(config_from_json({{"lr", 0.5}}, d).epochs == 7);
    CHECK_THROWS_AS(config_from_json({{"learning_rate", 0.5}}), ConfigError);
}

TEST_CASE("folds keep patients together") {
    const auto five = manifest_of({{"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}, {"e", "5"}});
    const auto folds = make_folds(five, 5, 3);
    REQUIRE(folds.size() == 5);
    std::set<std::string> tested;
    for (const auto& f : folds) {
        CHECK(f.test.size() == 1);
        CHECK(f.val.size() == 1);
        CHECK(f.train.size() == 3);
        tested.insert(f.test[0]);
        check_no_leakage(f, five);
    }
    CHECK(tested.size() == 5);

    const auto paired = manifest_of({{"a", "1"}, {"b", "1"}, {"c", "2"}, {"d", "3"}, {"e", "4"}});
    for (const auto& f : make_folds(paired, 4, 9)) {
        check_no_leakage(f, paired);
        const bool a_test = std::count(f.test.begin(), f.test.end(), "a") > 0;
        const bool b_test = std::count(f.test.begin(), f.test.end(), "b") > 0;
        CHECK(a_test == b_test);
    }

    std::vector<std::pair<std::string, std::string>> ids;
    for (int i = 0; i < 20; ++i) ids.push_back({"s" + std::to_string(i), "p" + std::to_string(i)});
    const auto twenty = manifest_of(ids);
    std::multiset<std::string> covered;
    for (const auto& f : make_folds(twenty, 5, 1)) {
        CHECK(f.train.size() + f.val.size() + f.test.size() == 20);
        covered.insert(f.test.begin(), f.test.end());
    }
    CHECK(covered.size() == 20);
    CHECK(std::set<std::string>(covered.begin(), covered.end()).size() == 20);
    CHECK(make_folds(twenty, 5, 1)[2].test == make_folds(twenty, 5, 1)[2].test);

    CHECK_THROWS_AS(make_folds(twenty, 2, 0), ConfigError);
    CHECK_THROWS_AS(make_folds(five, 6, 0), ConfigError);

    Fold leaky{0, {"a"}, {"b"}, {"c", "d", "e"}};
    CHECK_THROWS_AS(check_no_leakage(leaky, paired), ContractError);
    Fold missing{0, {"a", "b"}, {"c"}, {"d"}};
    CHECK_THROWS_AS(check_no_leakage(missing, paired), ContractError);
}

TEST_CASE("synthetic cohorts") {
    auto s = small_synth(1);
    s.censor_rate = 0.0;
    const auto c = synth_cohort(s);
    CHECK(c.manifest.size() == 30);
    CHECK(c.bags.size() == 30);
    for (const auto& e : c.manifest) CHECK(!e.censored);
    CHECK(synth_cohort(s).bags == c.bags);

    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto z = small_synth(seed);
        z.num_samples = 100;
        z.signal_weight = 0.0;
        mean += oracle_c_index(synth_cohort(z)) / 20.0;
    }
    CHECK(std::abs(mean - 0.5) < 0.03);

    auto strong = small_synth(2);
    strong.num_samples = 200;
    strong.signal_weight = 3.0;
    CHECK(oracle_c_index(synth_cohort(strong)) > 0.75);

    auto bad = small_synth(0);
    bad.num_samples = 10;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(signal_mode_from_string(to_string(SignalMode::interaction)) == SignalMode::interaction);
}

TEST_CASE("dataset files") {
    testing::TempDir dir("dataset");
    const auto c = synth_cohort(small_synth(3));
    write_cohort(dir.path(), c);
    const auto d = load_dataset(dir.path());
    CHECK(d.samples.size() == 30);
    CHECK(d.num_markers() == 3);
    CHECK(d.embed_dim() == 8);
    CHECK(d.manifest() == c.manifest);
    CHECK(d.at(c.manifest[4].sample_id).bag.embeddings == c.bags[4].embeddings);
    CHECK_THROWS(d.at("nope"));

    auto bags = c.bags;
    bags[1].embed_dim = 4;
    bags[1].embeddings.resize(bags[1].num_patches * bags[1].num_markers * 4);
    CHECK_THROWS_AS(Dataset::from_bags(c.manifest, bags), FormatError);
}

TEST_CASE("model output shapes and kinds") {
    TrainConfig cfg = small_config();
    const auto m = Model::init(cfg, 8, 5);
    std::mt19937_64 rng(42);
    const auto H = testing::random_tensor({4, 3, 8}, rng, -1, 1, false);
    const auto out = m.forward(H);
    CHECK(out.patch_attention.numel() == 4);
    CHECK(out.marker_attention.shape() == nx::Shape{4, 3, 3});
    CHECK(out.hazards.numel() == 4);
    CHECK(out.risk.item() > 0.0);
    CHECK_THROWS_AS(m.forward(testing::random_tensor({4, 3, 5}, rng, -1, 1, false)), DimensionError);

    cfg.model = ModelKind::channel_mean;
    const auto cm = Model::init(cfg, 8, 5);
    CHECK(cm.forward(H).marker_attention.numel() == 0);
    CHECK(cm.named_parameters().size() < m.named_parameters().size());
}

TEST_CASE("checkpoint round trip and corruption") {
    testing::TempDir dir("ckpt");
    const auto cfg = small_config();
    const auto m = Model::init(cfg, 8, 6);
    const auto ck = Checkpoint::capture(m, cfg, {{1.0, 2.0, 3.0}}, 4, 0.625);
    write_checkpoint(dir.path() / "a.flck", ck);
    const auto back = read_checkpoint(dir.path() / "a.flck");
    CHECK(back.tensors == ck.tensors);
    CHECK(back.epoch == 4);
    CHECK(back.val_c_index == 0.625);
    CHECK(back.bins == ck.bins);
    CHECK(encode_checkpoint(back) == encode_checkpoint(ck));

    std::mt19937_64 rng(43);
    const auto H = testing::random_tensor({3, 3, 8}, rng, -1, 1, false);
    CHECK(testing::values(back.restore().forward(H).logits) == testing::values(m.forward(H).logits));

    auto bytes = encode_checkpoint(ck);
    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.resize(bad.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);

    auto wrong = ck;
    wrong.tensors[0].shape.back() += 1;
    CHECK_THROWS_AS(wrong.restore(), FormatError);
}

TEST_CASE("zero learning rate leaves the initialisation in place") {
    const auto data = small_data(4);
    auto cfg = small_config();
    cfg.lr = 0.0;
    cfg.epochs = 1;
    const auto folds = make_folds(data.manifest(), 3, cfg.seed);
    const auto r = train_fold(folds[0], data, cfg);
    const auto init = Checkpoint::capture(Model::init(cfg, data.embed_dim(), fold_seed(cfg.seed, 0)), cfg,
                                          r.best.bins, 0, 0.0);
    CHECK(r.best.tensors == init.tensors);
    REQUIRE(r.log.size() == 1);
    CHECK(std::isfinite(r.log[0].train_loss));
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto data = small_data(5);
    auto cfg = small_config();
    cfg.epochs = 3;
    const auto folds = make_folds(data.manifest(), 3, 0);
    const auto a = train_fold(folds[1], data, cfg);
    const auto b = train_fold(folds[1], data, cfg);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.best.tensors == b.best.tensors);

    // Median over seeds of (loss at epoch 5) - (loss at epoch 1).
    std::vector<double> drops;
    cfg.epochs = 5;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cfg.seed = seed;
        const auto r = train_fold(folds[0], data, cfg);
        drops.push_back(r.log.back().train_loss - r.log.front().train_loss);
    }
    std::sort(drops.begin(), drops.end());
    CHECK(drops[2] < 0.0);
}

TEST_CASE("evaluation") {
    const auto data = small_data(6);
    const auto cfg = small_config();
    const auto ck = Checkpoint::capture(Model::init(cfg, 8, 1), cfg, {{1.0, 2.0, 3.0}}, 0, 0.0);
    const std::vector<std::string> one{data.samples[0].entry.sample_id};
    CHECK_THROWS_AS(evaluate(ck, data.select(one)), UndefinedMetricError);

    std::vector<std::string> all;
    for (const auto& s : data.samples) all.push_back(s.entry.sample_id);
    const auto ev = evaluate(ck, data.select(all));
    CHECK(ev.sample_ids == all);
    CHECK(ev.risks == score_samples(ck.restore(), data.select(all), cfg.precision));
    CHECK(ev.c_index >= 0.0);
    CHECK(ev.c_index <= 1.0);
}

TEST_CASE("interpretability export") {
    testing::TempDir dir("export");
    const auto data = small_data(7);
    const auto cfg = small_config();
    const auto m = Model::init(cfg, 8, 2);
    CHECK(export_interpretability(m, {}, dir.path() / "none", cfg.precision).slides.empty());
    CHECK(!std::filesystem::exists(dir.path() / "none" / "morans_i.csv"));

    std::vector<const Sample*> samples{&data.samples[0], &data.samples[1]};
    const auto rep = export_interpretability(m, samples, dir.path(), cfg.precision);
    REQUIRE(rep.slides.size() == 2);
    CHECK(rep.marker_attention.has_value());
    CHECK(rep.slides[0].rows == 2);
    CHECK(rep.slides[0].cols == 3);
    const auto id = data.samples[0].entry.sample_id;
    for (const char* f : {"attention/", "argmax/"}) {
        CHECK(std::filesystem::exists(dir.path() / (f + id + ".csv")));
        CHECK(std::filesystem::exists(dir.path() / (f + id + ".png")));
    }
    CHECK(std::filesystem::exists(dir.path() / "marker_attention.csv"));
    CHECK(std::filesystem::exists(dir.path() / "morans_i.csv"));

    // A single-patch bag has a 1x1 grid and no defined Moran's I.
    Sample lone = data.samples[0];
    lone.bag.num_patches = 1;
    lone.bag.coords.resize(1);
    lone.bag.embeddings.resize(3 * 8);
    lone.embeddings = lone.bag.tensor();
    const auto r1 = export_interpretability(m, {&lone}, {}, cfg.precision);
    CHECK(r1.slides[0].rows == 1);
    CHECK(r1.slides[0].cols == 1);
    CHECK(r1.slides[0].patch_attention == std::vector<double>{1.0});
    CHECK(!r1.slides[0].morans_i.has_value());
}

TEST_CASE("cross-validation outputs") {
    testing::TempDir dir("cv");
    const auto data = small_data(8);
    const auto cfg = small_config();
    const auto a = run_cross_validation(data, cfg, dir.path(), 1);
    const auto b = run_cross_validation(data, cfg, {}, 2);
    CHECK(a.summaries.size() == 3);
    CHECK(a.table("Fluoroformer") == b.table("Fluoroformer"));
    for (const char* f : {"config.json", "folds.json", "summary.md", "summary.json", "fold_0/checkpoint.flck",
                          "fold_2/train_log.jsonl", "fold_1/test_risks.csv"})
        CHECK(std::filesystem::exists(dir.path() / f));
}

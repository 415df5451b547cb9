// fluoro: preprocess slides, synthesise cohorts, train, evaluate, export and self-test.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fluoro/errors.hpp"
#include "fluoro/fault.hpp"
#include "fluoro/pipeline/bag_io.hpp"
#include "fluoro/pipeline/embedder.hpp"
#include "fluoro/pipeline/foreground.hpp"
#include "fluoro/pipeline/image.hpp"
#include "fluoro/pipeline/manifest.hpp"
#include "fluoro/pipeline/patches.hpp"
#include "fluoro/selftest/selftest.hpp"
#include "fluoro/trainer/experiment.hpp"
#include "fluoro/trainer/export.hpp"
#include "fluoro/trainer/synth.hpp"

namespace fs = std::filesystem;
using namespace fluoro;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, numeric = 3 };

void write_json(const fs::path& path, const nlohmann::json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
}

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
    fs::path input, out;
    std::string mode = "mif";
    std::size_t patch_size = 224;
    std::size_t factor = 224;
    std::string embedder = "stub";
    std::size_t d_emb = 64;
    std::uint64_t seed = 0x5eed;
};

struct Clinical {
    std::string patient_id;
    double time_days = 0.0;
    bool censored = true;
};

// Optional <input>/clinical.csv: sample_id,patient_id,time_days,censored.
std::map<std::string, Clinical> read_clinical(const fs::path& path) {
    std::map<std::string, Clinical> out;
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sample_id,patient_id,time_days,censored") {
        throw FormatError(path.string() + ": header must be sample_id,patient_id,time_days,censored");
    }
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string field; std::getline(ss, field, ',');) f.push_back(field);
        const auto where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 4 || f[0].empty() || f[1].empty()) throw FormatError(where + ": expected 4 fields");
        Clinical c{f[1], 0.0, f[3] == "1"};
        char* end = nullptr;
        c.time_days = std::strtod(f[2].c_str(), &end);
        if (end == f[2].c_str() || *end != '\0' || !std::isfinite(c.time_days) || c.time_days < 0.0) {
            throw FormatError(where + ": bad time_days '" + f[2] + "'");
        }
        if (f[3] != "0" && f[3] != "1") throw FormatError(where + ": censored must be 0 or 1");
        if (!out.emplace(f[0], c).second) throw FormatError(where + ": duplicate sample '" + f[0] + "'");
    }
    return out;
}

int run_preprocess(const PreprocessArgs& a) {
    if (!fs::is_directory(a.input)) throw IoError("input directory '" + a.input.string() + "' not found");
    const auto modality = pipeline::modality_from_string(a.mode);
    const auto clinical = read_clinical(a.input / "clinical.csv");

    std::vector<pipeline::ManifestEntry> manifest;
    std::size_t total_patches = 0, channels = 0;
    auto add_entry = [&](const fusion::EmbeddedBag& bag) {
        const auto bag_rel = "bags/" + bag.sample_id + ".flbg";
        pipeline::write_bag(a.out / bag_rel, bag);
        pipeline::ManifestEntry e{bag.sample_id, bag.sample_id, 0.0, true, bag_rel};
        if (auto it = clinical.find(bag.sample_id); it != clinical.end()) {
            e.patient_id = it->second.patient_id;
            e.time_days = it->second.time_days;
            e.censored = it->second.censored;
        } else {
            std::cerr << "note: no clinical row for '" << bag.sample_id << "'; written as censored at day 0\n";
        }
        manifest.push_back(e);
        total_patches += bag.num_patches;
        channels = bag.num_markers;
    };

    if (a.embedder == "import") {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(a.input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".flbg") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw FormatError("no .flbg embedding files under '" + a.input.string() + "'");
        for (const auto& f : files) {
            auto bag = pipeline::read_bag(f);
            if (modality == pipeline::Modality::he && bag.num_markers != 1) {
                throw ConfigError("H&E mode expects one channel per bag, '" + f.string() + "' has " +
                                  std::to_string(bag.num_markers));
            }
            add_entry(bag);
        }
    } else if (a.embedder == "stub") {
        std::vector<fs::path> slides;
        bool flat = false;
        for (const auto& entry : fs::directory_iterator(a.input)) {
            if (entry.is_directory()) slides.push_back(entry.path());
            if (entry.is_regular_file() && entry.path().extension() == ".png") flat = true;
        }
        if (flat) slides = {a.input};
        std::sort(slides.begin(), slides.end());
        if (slides.empty()) throw FormatError("no slides (PNG images or slide directories) in '" + a.input.string() + "'");
        pipeline::StubEmbedder embedder(a.d_emb, a.seed);
        for (const auto& dir : slides) {
            auto slide = pipeline::load_slide(fs::absolute(dir).lexically_normal(), modality);
            const auto mask = pipeline::foreground_mask(slide, a.factor);
            for (const auto& w : mask.warnings) std::cerr << "warning: " << slide.sample_id << ": " << w << '\n';
            const auto patches = pipeline::extract_patches(slide, mask, a.patch_size);
            const auto names = modality == pipeline::Modality::he ? std::vector<std::string>{"HE"} : slide.channel_names;
            add_entry(pipeline::embed_bag(patches, embedder, names, slide.sample_id, modality));
        }
    } else {
        throw ConfigError("unknown embedder '" + a.embedder + "' (stub, import)");
    }
    pipeline::write_manifest(a.out / pipeline::kManifestName, manifest);
    write_json(a.out / "config.json", {{"command", "preprocess"},
                                       {"mode", a.mode},
                                       {"patch_size", a.patch_size},
                                       {"factor", a.factor},
                                       {"embedder", a.embedder},
                                       {"d_emb", a.d_emb},
                                       {"seed", a.seed}});
    std::cout << "slides: " << manifest.size() << "  patches: " << total_patches << "  channels: " << channels << '\n';
    return ok;
}

// ---- synth ----------------------------------------------------------------

int run_synth(const trainer::SynthConfig& cfg, const fs::path& out) {
    const auto cohort = trainer::synth_cohort(cfg);
    trainer::write_cohort(out, cohort);
    const double oracle = trainer::oracle_c_index(cohort);
    write_json(out / "config.json", {{"command", "synth"},
                                     {"num_samples", cfg.num_samples},
                                     {"num_markers", cfg.num_markers},
                                     {"embed_dim", cfg.embed_dim},
                                     {"grid_rows", cfg.grid_rows},
                                     {"grid_cols", cfg.grid_cols},
                                     {"censor_rate", cfg.censor_rate},
                                     {"signal_weight", cfg.signal_weight},
                                     {"signal_amplitude", cfg.signal_amplitude},
                                     {"noise", cfg.noise},
                                     {"tissue_amplitude", cfg.tissue_amplitude},
                                     {"mode", trainer::to_string(cfg.mode)},
                                     {"seed", cfg.seed},
                                     {"oracle_c_index", oracle}});
    std::size_t censored = 0;
    for (const auto& e : cohort.manifest) censored += e.censored;
    std::cout << "samples: " << cohort.manifest.size() << "  censored: " << censored
              << "  oracle C-index: " << fixed(oracle, 4) << '\n';
    return ok;
}

// ---- train ----------------------------------------------------------------

int run_train(const trainer::TrainConfig& cfg, const fs::path& bags, const fs::path& out, std::size_t threads) {
    const auto data = trainer::load_dataset(bags);
    const auto cv = trainer::run_cross_validation(data, cfg, out, threads);
    for (const auto& s : cv.summaries) {
        for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
    }
    std::cout << cv.table(trainer::to_string(cfg.model));
    return ok;
}

// ---- evaluate / export ----------------------------------------------------

int run_evaluate(const fs::path& checkpoint, const fs::path& bags, const fs::path& out) {
    const auto ckpt = trainer::read_checkpoint(checkpoint);
    const auto data = trainer::load_dataset(bags);
    std::vector<const trainer::Sample*> samples;
    for (const auto& s : data.samples) samples.push_back(&s);
    const auto ev = trainer::evaluate(ckpt, samples);
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream csv(out / "risks.csv");
        if (!csv) throw IoError("cannot write " + (out / "risks.csv").string());
        csv << "sample_id,risk,time_days,censored\n";
        char buf[64];
        for (std::size_t i = 0; i < ev.risks.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", ev.risks[i], ev.times[i]);
            csv << ev.sample_ids[i] << ',' << buf << ',' << (ev.censored[i] ? 1 : 0) << '\n';
        }
        write_json(out / "config.json", {{"command", "evaluate"},
                                         {"checkpoint", checkpoint.string()},
                                         {"bags", bags.string()},
                                         {"train_config", trainer::to_json(ckpt.config)},
                                         {"c_index", ev.c_index}});
    }
    std::cout << "samples: " << ev.risks.size() << "  C-index: " << fixed(ev.c_index, 4) << '\n';
    return ok;
}

int run_export(const fs::path& checkpoint, const fs::path& bags, const fs::path& out, double top_fraction) {
    const auto ckpt = trainer::read_checkpoint(checkpoint);
    const auto data = trainer::load_dataset(bags);
    if (data.embed_dim() != ckpt.embed_dim) {
        throw FormatError("bags are d_emb=" + std::to_string(data.embed_dim()) + ", checkpoint expects " +
                          std::to_string(ckpt.embed_dim));
    }
    std::vector<const trainer::Sample*> samples;
    for (const auto& s : data.samples) samples.push_back(&s);
    const auto model = ckpt.restore();
    const auto report = trainer::export_interpretability(model, samples, out, ckpt.config.precision, top_fraction);
    write_json(out / "config.json", {{"command", "export"},
                                     {"checkpoint", checkpoint.string()},
                                     {"bags", bags.string()},
                                     {"top_fraction", top_fraction},
                                     {"train_config", trainer::to_json(ckpt.config)}});
    double mi = 0.0;
    std::size_t defined = 0;
    for (const auto& s : report.slides) {
        if (s.morans_i) {
            mi += *s.morans_i;
            ++defined;
        }
    }
    std::cout << "slides: " << report.slides.size() << "  mean Moran's I: "
              << (defined ? fixed(mi / static_cast<double>(defined), 4) : std::string("n/a")) << '\n';
    return ok;
}

// ---- selftest -------------------------------------------------------------

int run_selftest(const std::string& fault_name) {
    if (fault_name == "gelu_backward") {
        fault::set(fault::Fault::gelu_backward);
    } else if (fault_name == "checkpoint_magic") {
        fault::set(fault::Fault::checkpoint_magic);
    } else if (!fault_name.empty()) {
        throw ConfigError("unknown fault '" + fault_name + "'");
    }
    const auto failure = selftest::run_all([](const selftest::CheckResult& r) {
        std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  (" + r.detail + ")") << '\n';
    });
    if (failure.name.empty()) {
        std::cout << "selftest passed\n";
        return ok;
    }
    std::cerr << "first failure: " << failure.name << ": " << failure.detail << '\n';
    return failure.name.rfind("gradient", 0) == 0 ? numeric : data;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fluoroformer: marker fusion and attention MIL for multiplexed slide survival"};
    app.require_subcommand(1);

    PreprocessArgs pre;
    auto* cmd_pre = app.add_subcommand("preprocess", "Foreground detection, tiling and embedding of slides");
    cmd_pre->add_option("--input", pre.input, "Slide directory, or directory of slide directories")->required();
    cmd_pre->add_option("--mode", pre.mode, "mif or he")->check(CLI::IsMember({"mif", "he"}));
    cmd_pre->add_option("--patch-size", pre.patch_size, "Patch edge in pixels")->check(CLI::PositiveNumber);
    cmd_pre->add_option("--factor", pre.factor, "Downsampling factor for the foreground grid")->check(CLI::PositiveNumber);
    cmd_pre->add_option("--embedder", pre.embedder, "stub (random projection) or import (.flbg files)")
        ->check(CLI::IsMember({"stub", "import"}));
    cmd_pre->add_option("--d-emb", pre.d_emb, "Embedding width for the stub embedder")->check(CLI::PositiveNumber);
    cmd_pre->add_option("--seed", pre.seed, "Stub embedder seed");
    cmd_pre->add_option("--out", pre.out, "Output directory")->required();

    trainer::SynthConfig syn;
    fs::path syn_out;
    std::string syn_mode = "linear";
    auto* cmd_syn = app.add_subcommand("synth", "Generate a planted-signal synthetic cohort");
    cmd_syn->add_option("--n", syn.num_samples, "Number of slides (>= 20)");
    cmd_syn->add_option("--markers", syn.num_markers, "Marker channels");
    cmd_syn->add_option("--d-emb", syn.embed_dim, "Embedding width");
    cmd_syn->add_option("--grid-rows", syn.grid_rows, "Patch grid rows");
    cmd_syn->add_option("--grid-cols", syn.grid_cols, "Patch grid columns");
    cmd_syn->add_option("--censor-rate", syn.censor_rate, "Censored share");
    cmd_syn->add_option("--signal-weight", syn.signal_weight, "Log-hazard per unit of true risk");
    cmd_syn->add_option("--signal-amplitude", syn.signal_amplitude, "Signal strength in embedding space");
    cmd_syn->add_option("--noise", syn.noise, "Per-coordinate patch noise");
    cmd_syn->add_option("--tissue-amplitude", syn.tissue_amplitude, "Smooth tissue field strength (smooth mode)");
    cmd_syn->add_option("--mode", syn_mode, "linear, interaction or smooth")
        ->check(CLI::IsMember({"linear", "interaction", "smooth"}));
    cmd_syn->add_option("--seed", syn.seed, "Generator seed");
    cmd_syn->add_option("--out", syn_out, "Output directory")->required();

    trainer::TrainConfig tc;
    fs::path train_bags, train_out, config_path;
    std::string model_kind = "fluoroformer", precision = "f32";
    std::size_t threads = 0;
    auto* cmd_train = app.add_subcommand("train", "Patient-stratified k-fold cross-validation");
    cmd_train->add_option("--bags", train_bags, "Directory holding manifest.csv")->required();
    cmd_train->add_option("--out", train_out, "Output directory")->required();
    cmd_train->add_option("--config", config_path, "JSON training config; flags override it");
    std::map<std::string, CLI::Option*> flags;
    flags["folds"] = cmd_train->add_option("--folds", tc.folds, "Number of folds (>= 3)");
    flags["epochs"] = cmd_train->add_option("--epochs", tc.epochs, "Training epochs");
    flags["lr"] = cmd_train->add_option("--lr", tc.lr, "Learning rate");
    flags["weight_decay"] = cmd_train->add_option("--weight-decay", tc.weight_decay, "Decoupled weight decay");
    flags["seed"] = cmd_train->add_option("--seed", tc.seed, "Seed for folds, initialisation and shuffling");
    flags["num_bins"] = cmd_train->add_option("--bins", tc.num_bins, "Survival intervals");
    flags["hidden_dim"] = cmd_train->add_option("--d-hid", tc.hidden_dim, "Fusion bottleneck width (0 = auto)");
    flags["attention_dim"] = cmd_train->add_option("--d-att", tc.attention_dim, "Gated attention width");
    flags["model"] = cmd_train->add_option("--model", model_kind, "fluoroformer or channel-mean")
                         ->check(CLI::IsMember({"fluoroformer", "channel-mean"}));
    flags["precision"] =
        cmd_train->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    cmd_train->add_option("--threads", threads, "Fold worker threads (default: FLUORO_THREADS or all cores)");

    fs::path eval_ckpt, eval_bags, eval_out;
    auto* cmd_eval = app.add_subcommand("evaluate", "Risk scores and C-index of a checkpoint on a cohort");
    cmd_eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd_eval->add_option("--bags", eval_bags, "Directory holding manifest.csv")->required();
    cmd_eval->add_option("--out", eval_out, "Output directory for risks.csv");

    fs::path exp_ckpt, exp_bags, exp_out;
    double top_fraction = 0.10;
    auto* cmd_exp = app.add_subcommand("export", "Attention heatmaps, marker attention and Moran's I");
    cmd_exp->add_option("--checkpoint", exp_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd_exp->add_option("--bags", exp_bags, "Directory holding manifest.csv")->required();
    cmd_exp->add_option("--out", exp_out, "Output directory")->required();
    cmd_exp->add_option("--top-fraction", top_fraction, "Share of top-attended patches per slide")
        ->check(CLI::Range(0.0, 1.0));

    std::string fault_name;
    auto* cmd_self = app.add_subcommand("selftest", "Gradient checks, oracle equivalences and format round trips");
    cmd_self->add_option("--inject-fault", fault_name)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*cmd_pre) return run_preprocess(pre);
        if (*cmd_syn) {
            syn.mode = trainer::signal_mode_from_string(syn_mode);
            return run_synth(syn, syn_out);
        }
        if (*cmd_train) {
            trainer::TrainConfig cfg;
            if (!config_path.empty()) cfg = trainer::config_from_json(read_json(config_path), cfg);
            // Explicit flags win over the config file.
            auto given = [&](const char* key) { return flags.at(key)->count() > 0; };
            if (given("folds")) cfg.folds = tc.folds;
            if (given("epochs")) cfg.epochs = tc.epochs;
            if (given("lr")) cfg.lr = tc.lr;
            if (given("weight_decay")) cfg.weight_decay = tc.weight_decay;
            if (given("seed")) cfg.seed = tc.seed;
            if (given("num_bins")) cfg.num_bins = tc.num_bins;
            if (given("hidden_dim")) cfg.hidden_dim = tc.hidden_dim;
            if (given("attention_dim")) cfg.attention_dim = tc.attention_dim;
            if (given("model")) cfg.model = trainer::model_kind_from_string(model_kind);
            if (given("precision")) cfg.precision = nx::precision_from_string(precision);
            cfg.validate();
            return run_train(cfg, train_bags, train_out, threads);
        }
        if (*cmd_eval) return run_evaluate(eval_ckpt, eval_bags, eval_out);
        if (*cmd_exp) return run_export(exp_ckpt, exp_bags, exp_out, top_fraction);
        if (*cmd_self) return run_selftest(fault_name);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return numeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data;
    }
    return usage;
}

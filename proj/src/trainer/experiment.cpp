#include "fluoro/trainer/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fluoro/errors.hpp"
#include "fluoro/trainer/export.hpp"

namespace fluoro::trainer {

namespace {

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

FoldSummary run_fold(const Fold& fold, const Dataset& data, const TrainConfig& config,
                     const std::filesystem::path& out, FoldResult& result) {
    result = train_fold(fold, data, config);
    FoldSummary s;
    s.index = fold.index;
    s.best_epoch = result.best.epoch;
    s.val_c_index = result.best.val_c_index;
    s.warnings = result.warnings;
    const auto test = data.select(fold.test);
    std::optional<Evaluation> ev;
    try {
        ev = evaluate(result.best, test);
        s.test_c_index = ev->c_index;
    } catch (const UndefinedMetricError& e) {
        s.warnings.push_back("fold " + std::to_string(fold.index) + ": test C-index undefined: " + e.what());
    }
    const auto model = result.best.restore();
    const auto report = export_interpretability(model, test, {}, config.precision);
    double mi = 0.0;
    std::size_t defined = 0;
    for (const auto& slide : report.slides) {
        if (slide.morans_i) {
            mi += *slide.morans_i;
            ++defined;
        }
    }
    if (defined > 0) s.test_morans_i = mi / static_cast<double>(defined);

    if (!out.empty()) {
        const auto dir = out / ("fold_" + std::to_string(fold.index));
        write_checkpoint(dir / "checkpoint.flck", result.best);
        write_epoch_log(dir / "train_log.jsonl", result.log);
        std::string csv = "sample_id,risk,time_days,censored\n";
        const auto risks = ev ? ev->risks : score_samples(model, test, config.precision);
        for (std::size_t i = 0; i < test.size(); ++i) {
            csv += test[i]->entry.sample_id + ',' + fmt17(risks[i]) + ',' + fmt17(test[i]->entry.time_days) + ',' +
                   (test[i]->entry.censored ? "1" : "0") + '\n';
        }
        write_text(dir / "test_risks.csv", csv);
    }
    return s;
}

}  // namespace

std::size_t thread_count() {
    if (const char* env = std::getenv("FLUORO_THREADS")) {
        char* end = nullptr;
        const auto v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return v;
        throw ConfigError(std::string("FLUORO_THREADS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

CvResult run_cross_validation(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out,
                              std::size_t threads) {
    config.validate();
    const auto manifest = data.manifest();
    CvResult cv;
    cv.folds = make_folds(manifest, config.folds, config.seed);
    for (const auto& f : cv.folds) check_no_leakage(f, manifest);

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        write_text(out / "config.json", to_json(config).dump(2) + "\n");
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : cv.folds) {
            folds.push_back({{"fold", f.index}, {"train", f.train}, {"val", f.val}, {"test", f.test}});
        }
        write_text(out / "folds.json", folds.dump(2) + "\n");
    }

    const auto k = cv.folds.size();
    cv.summaries.resize(k);
    cv.results.resize(k);
    std::vector<std::exception_ptr> errors(k);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto f = next++; f < k; f = next++) {
            try {
                cv.summaries[f] = run_fold(cv.folds[f], data, config, out, cv.results[f]);
            } catch (...) {
                errors[f] = std::current_exception();
            }
        }
    };
    const auto n = std::min(k, threads == 0 ? thread_count() : threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<double> cs, mis;
    for (const auto& s : cv.summaries) {
        if (s.test_c_index) cs.push_back(*s.test_c_index);
        if (s.test_morans_i) mis.push_back(*s.test_morans_i);
    }
    if (cs.empty()) throw UndefinedMetricError("test C-index undefined on every fold");
    for (double c : cs) cv.mean_c_index += c / static_cast<double>(cs.size());
    double ss = 0.0;
    for (double c : cs) ss += (c - cv.mean_c_index) * (c - cv.mean_c_index);
    cv.std_c_index = cs.size() > 1 ? std::sqrt(ss / static_cast<double>(cs.size() - 1)) : 0.0;
    cv.mean_morans_i = std::numeric_limits<double>::quiet_NaN();
    if (!mis.empty()) {
        cv.mean_morans_i = 0.0;
        for (double m : mis) cv.mean_morans_i += m / static_cast<double>(mis.size());
    }

    if (!out.empty()) {
        write_text(out / "summary.md", cv.table(to_string(config.model)));
        nlohmann::json j{{"model", to_string(config.model)},
                         {"mean_c_index", cv.mean_c_index},
                         {"std_c_index", cv.std_c_index},
                         {"mean_morans_i", mis.empty() ? nlohmann::json(nullptr) : nlohmann::json(cv.mean_morans_i)}};
        for (const auto& s : cv.summaries) {
            nlohmann::json f{{"fold", s.index}, {"best_epoch", s.best_epoch}, {"warnings", s.warnings}};
            f["val_c_index"] = std::isnan(s.val_c_index) ? nlohmann::json(nullptr) : nlohmann::json(s.val_c_index);
            f["test_c_index"] = s.test_c_index ? nlohmann::json(*s.test_c_index) : nlohmann::json(nullptr);
            f["test_morans_i"] = s.test_morans_i ? nlohmann::json(*s.test_morans_i) : nlohmann::json(nullptr);
            j["folds"].push_back(f);
        }
        write_text(out / "summary.json", j.dump(2) + "\n");
    }
    return cv;
}

std::string CvResult::table(const std::string& label) const {
    auto opt = [](const std::optional<double>& v) { return v ? fmt3(*v) : std::string("n/a"); };
    std::string t = "| Model | C-index ± STD | MI |\n|---|---|---|\n";
    t += "| " + label + " | " + fmt3(mean_c_index) + " ± " + fmt3(std_c_index) + " | " +
         (std::isnan(mean_morans_i) ? std::string("n/a") : fmt3(mean_morans_i)) + " |\n\n";
    t += "| Fold | Best epoch | Val C-index | Test C-index | MI |\n|---|---|---|---|---|\n";
    for (const auto& s : summaries) {
        t += "| " + std::to_string(s.index) + " | " + std::to_string(s.best_epoch) + " | " +
             (std::isnan(s.val_c_index) ? std::string("n/a") : fmt3(s.val_c_index)) + " | " + opt(s.test_c_index) +
             " | " + opt(s.test_morans_i) + " |\n";
    }
    return t;
}

}  // namespace fluoro::trainer

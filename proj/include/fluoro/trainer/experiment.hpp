#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluoro/trainer/config.hpp"
#include "fluoro/trainer/dataset.hpp"
#include "fluoro/trainer/folds.hpp"
#include "fluoro/trainer/train.hpp"

namespace fluoro::trainer {

struct FoldSummary {
    std::size_t index = 0;
    std::size_t best_epoch = 0;
    double val_c_index = 0.0;             // NaN when undefined
    std::optional<double> test_c_index;   // empty when undefined
    std::optional<double> test_morans_i;  // mean over test slides with a defined value
    std::vector<std::string> warnings;
};

struct CvResult {
    std::vector<Fold> folds;
    std::vector<FoldSummary> summaries;
    std::vector<FoldResult> results;
    double mean_c_index = 0.0;
    double std_c_index = 0.0;  // sample standard deviation across folds
    double mean_morans_i = 0.0;

    // Markdown table with the columns "C-index ± STD" and "MI", then per-fold rows.
    std::string table(const std::string& label) const;
};

// Worker threads for fold-level parallelism: FLUORO_THREADS when set, else the
// hardware concurrency.
std::size_t thread_count();

/// k-fold patient-stratified cross-validation. Folds train concurrently; every
/// fold is independent so the result does not depend on the thread count.
/// With a non-empty `out`, writes config.json, folds.json, summary.md,
/// summary.json and fold_<f>/{checkpoint.flck,train_log.jsonl,test_risks.csv}.
CvResult run_cross_validation(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out = {},
                              std::size_t threads = 0);

}  // namespace fluoro::trainer

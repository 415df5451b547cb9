#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluoro/trainer/checkpoint.hpp"
#include "fluoro/trainer/config.hpp"
#include "fluoro/trainer/dataset.hpp"
#include "fluoro/trainer/folds.hpp"

namespace fluoro::trainer {

struct EpochLog {
    std::size_t epoch = 0;          // 1-based
    double train_loss = 0.0;        // mean NLL over the epoch's steps
    std::optional<double> val_c_index;  // empty when undefined
    bool checkpointed = false;
};

struct FoldResult {
    Checkpoint best;
    std::vector<EpochLog> log;
    std::vector<std::string> warnings;
};

// Model seed for a fold: every fold starts from its own initialisation.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

/// Trains one fold: batch size one, seeded shuffle per epoch, validation
/// C-index after every epoch, checkpoint on a strictly new maximum. When the
/// validation C-index is undefined the last epoch is kept and a warning
/// recorded.
FoldResult train_fold(const Fold& fold, const Dataset& data, const TrainConfig& config);

struct Evaluation {
    std::vector<std::string> sample_ids;
    std::vector<double> risks;  // higher = longer predicted survival
    std::vector<double> times;
    std::vector<bool> censored;
    double c_index = 0.0;
};

std::vector<double> score_samples(const Model& model, const std::vector<const Sample*>& samples,
                                  nx::Precision precision);

// Risk per sample and test C-index; UndefinedMetricError when no pair is
// comparable.
Evaluation evaluate(const Checkpoint& checkpoint, const std::vector<const Sample*>& samples);

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace fluoro::trainer

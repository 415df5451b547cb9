#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fluoro/numerics/precision.hpp"

namespace fluoro::trainer {

enum class ModelKind {
    fluoroformer,  // marker fusion block, then gated attention pooling
    channel_mean,  // per-patch mean over markers, same pooling head
};

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

/// Training hyperparameters. Batch size is one bag per step; there is no
/// learning-rate schedule and no gradient clipping.
struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t epochs = 25;
    std::size_t num_bins = 4;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::size_t hidden_dim = 0;  // 0 picks min(256, d_emb / 4)
    std::size_t attention_dim = 256;
    bool qkv_bias = true;
    double norm_eps = 1e-5;
    nx::Precision precision = nx::Precision::f32;
    ModelKind model = ModelKind::fluoroformer;

    void validate() const;
    std::size_t resolved_hidden_dim(std::size_t embed_dim) const;
};

nlohmann::json to_json(const TrainConfig& c);
// Keys absent from `j` keep the values already in `base`; unknown keys are
// rejected.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

}  // namespace fluoro::trainer

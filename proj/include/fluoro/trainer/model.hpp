#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fluoro/fusion/fusion.hpp"
#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/pooling/pooling.hpp"
#include "fluoro/trainer/config.hpp"

namespace fluoro::trainer {

struct ModelOutput {
    nx::Tensor fused;             // [K x d_emb]
    nx::Tensor marker_attention;  // [K x M x M]; empty for channel-mean
    nx::Tensor patch_attention;   // [K]
    nx::Tensor logits;            // [N_bin]
    nx::Tensor hazards;
    nx::Tensor survival;
    nx::Tensor risk;  // scalar survival score
};

/// Fusion (or channel mean) -> gated attention pooling -> linear hazard head.
class Model {
public:
    static Model init(const TrainConfig& config, std::size_t embed_dim, std::uint64_t seed);

    ModelOutput forward(const nx::Tensor& embeddings) const;  // [K x M x d_emb]
    std::vector<nx::NamedTensor> named_parameters() const;

    ModelKind kind() const { return kind_; }
    std::size_t embed_dim() const { return embed_dim_; }
    const std::optional<fusion::FusionParams>& fusion_params() const { return fusion_; }

private:
    ModelKind kind_ = ModelKind::fluoroformer;
    std::size_t embed_dim_ = 0;
    std::optional<fusion::FusionParams> fusion_;
    pooling::GatedAttentionParams attention_;
    pooling::ClassifierParams classifier_;
};

}  // namespace fluoro::trainer

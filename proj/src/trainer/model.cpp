#include "fluoro/trainer/model.hpp"

#include <random>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/ops.hpp"
#include "fluoro/numerics/precision.hpp"
#include "fluoro/survival/survival.hpp"

namespace fluoro::trainer {

Model Model::init(const TrainConfig& config, std::size_t embed_dim, std::uint64_t seed) {
    config.validate();
    nx::PrecisionScope scope(config.precision);
    std::mt19937_64 rng(seed);
    Model model;
    model.kind_ = config.model;
    model.embed_dim_ = embed_dim;
    if (config.model == ModelKind::fluoroformer) {
        fusion::FusionConfig fc{embed_dim, config.resolved_hidden_dim(embed_dim), config.qkv_bias, config.norm_eps};
        model.fusion_ = fusion::FusionParams::init(fc, rng);
    }
    model.attention_ = pooling::GatedAttentionParams::init(embed_dim, config.attention_dim, rng);
    model.classifier_ = pooling::ClassifierParams::init(embed_dim, config.num_bins, rng);
    return model;
}

ModelOutput Model::forward(const nx::Tensor& embeddings) const {
    if (embeddings.rank() != 3 || embeddings.dim(2) != embed_dim_) {
        throw DimensionError("model expects [K x M x " + std::to_string(embed_dim_) + "], got " +
                             nx::shape_string(embeddings.shape()));
    }
    ModelOutput out;
    if (fusion_) {
        auto f = fusion::fuse(embeddings, *fusion_);
        out.fused = f.fused;
        out.marker_attention = f.attention;
    } else {
        out.fused = nx::mean(embeddings, 1);
    }
    auto pooled = pooling::pool_and_classify(out.fused, attention_, classifier_);
    out.patch_attention = pooled.attention;
    out.logits = pooled.logits;
    out.hazards = survival::hazards_from_logits(out.logits);
    out.survival = survival::survival_curve(out.hazards);
    out.risk = survival::risk_score(out.survival);
    return out;
}

std::vector<nx::NamedTensor> Model::named_parameters() const {
    std::vector<nx::NamedTensor> out;
    if (fusion_) out = fusion_->named_parameters();
    for (auto& p : attention_.named_parameters()) out.push_back(std::move(p));
    for (auto& p : classifier_.named_parameters()) out.push_back(std::move(p));
    return out;
}

}  // namespace fluoro::trainer

#include "fluoro/pooling/pooling.hpp"

#include "fluoro/errors.hpp"
#include "fluoro/numerics/ops.hpp"

namespace fluoro::pooling {

GatedAttentionParams GatedAttentionParams::init(std::size_t embed_dim, std::size_t attention_dim,
                                                std::mt19937_64& rng) {
    if (embed_dim == 0 || attention_dim == 0) throw ConfigError("attention dims must be positive");
    return {nx::Linear::init(embed_dim, attention_dim, rng), nx::Linear::init(embed_dim, attention_dim, rng),
            nx::Linear::init(attention_dim, 1, rng)};
}

std::vector<nx::NamedTensor> GatedAttentionParams::named_parameters() const {
    std::vector<nx::NamedTensor> out;
    V.append_parameters("attention.V", out);
    U.append_parameters("attention.U", out);
    w.append_parameters("attention.w", out);
    return out;
}

ClassifierParams ClassifierParams::init(std::size_t embed_dim, std::size_t num_bins, std::mt19937_64& rng) {
    if (embed_dim == 0 || num_bins == 0) throw ConfigError("classifier dims must be positive");
    return {nx::Linear::init(embed_dim, num_bins, rng)};
}

std::vector<nx::NamedTensor> ClassifierParams::named_parameters() const {
    std::vector<nx::NamedTensor> out;
    head.append_parameters("classifier.head", out);
    return out;
}

nx::Tensor gated_attention(const nx::Tensor& fused, const GatedAttentionParams& params) {
    if (fused.rank() != 2 || fused.dim(0) == 0 || fused.dim(1) != params.V.in_features()) {
        throw DimensionError("gated_attention: expected [K x " + std::to_string(params.V.in_features()) +
                             "], got " + nx::shape_string(fused.shape()));
    }
    auto gate = nx::hadamard(nx::tanh(nx::linear(fused, params.V)), nx::sigm(nx::linear(fused, params.U)));
    auto scores = nx::reshape(nx::linear(gate, params.w), {fused.dim(0)});
    return nx::softmax(scores, 0);
}

nx::Tensor pool(const nx::Tensor& fused, const nx::Tensor& attention) {
    if (attention.rank() != 1 || fused.rank() != 2 || attention.dim(0) != fused.dim(0)) {
        throw DimensionError("pool: attention " + nx::shape_string(attention.shape()) + " vs patches " +
                             nx::shape_string(fused.shape()));
    }
    auto row = nx::matmul(nx::reshape(attention, {1, attention.dim(0)}), fused);
    return nx::reshape(row, {fused.dim(1)});
}

nx::Tensor classify(const nx::Tensor& bag, const ClassifierParams& params) {
    if (bag.rank() != 1 || bag.dim(0) != params.head.in_features()) {
        throw DimensionError("classify: bag vector " + nx::shape_string(bag.shape()) + " vs head input " +
                             std::to_string(params.head.in_features()));
    }
    auto logits = nx::linear(nx::reshape(bag, {1, bag.dim(0)}), params.head);
    return nx::reshape(logits, {params.head.out_features()});
}

PoolOutput pool_and_classify(const nx::Tensor& fused, const GatedAttentionParams& attention,
                             const ClassifierParams& classifier) {
    auto a = gated_attention(fused, attention);
    auto bag = pool(fused, a);
    return {bag, a, classify(bag, classifier)};
}

}  // namespace fluoro::pooling

#pragma once

#include <random>
#include <vector>

#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/linear.hpp"
#include "fluoro/numerics/tensor.hpp"

namespace fluoro::pooling {

/// Double-gated attention: V and U map d_emb -> d_att, w maps d_att -> 1.
struct GatedAttentionParams {
    nx::Linear V;
    nx::Linear U;
    nx::Linear w;

    static GatedAttentionParams init(std::size_t embed_dim, std::size_t attention_dim, std::mt19937_64& rng);
    std::vector<nx::NamedTensor> named_parameters() const;
};

/// Linear head d_emb -> N_bin.
struct ClassifierParams {
    nx::Linear head;

    static ClassifierParams init(std::size_t embed_dim, std::size_t num_bins, std::mt19937_64& rng);
    std::vector<nx::NamedTensor> named_parameters() const;
};

struct PoolOutput {
    nx::Tensor bag;        // [d_emb]
    nx::Tensor attention;  // [K], a probability vector
    nx::Tensor logits;     // [N_bin]
};

// a = softmax_k( w^T (tanh(V h_k) * sigm(U h_k)) ) for fused patches [K x d_emb].
nx::Tensor gated_attention(const nx::Tensor& fused, const GatedAttentionParams& params);

// sum_k a_k h_k
nx::Tensor pool(const nx::Tensor& fused, const nx::Tensor& attention);

// W h_bag + b
nx::Tensor classify(const nx::Tensor& bag, const ClassifierParams& params);

PoolOutput pool_and_classify(const nx::Tensor& fused, const GatedAttentionParams& attention,
                             const ClassifierParams& classifier);

}  // namespace fluoro::pooling

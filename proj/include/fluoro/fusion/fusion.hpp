#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/linear.hpp"
#include "fluoro/numerics/tensor.hpp"
#include "fluoro/types.hpp"

namespace fluoro::fusion {

/// Channel-wise patch embeddings of one slide: K patches x M markers x d_emb.
struct EmbeddedBag {
    std::string sample_id;
    std::size_t num_patches = 0;
    std::size_t num_markers = 0;
    std::size_t embed_dim = 0;
    std::vector<std::string> channel_names;
    std::vector<GridCoord> coords;
    std::vector<float> embeddings;  // row-major [K][M][d_emb]

    // Throws DimensionError / FormatError on inconsistent extents or
    // duplicate coordinates. An empty bag (K = 0) is valid.
    void validate() const;
    nx::Tensor tensor() const;

    bool operator==(const EmbeddedBag&) const = default;
};

struct FusionConfig {
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 256;
    bool qkv_bias = true;
    double eps = 1e-5;
};

/// Learnable parameters of the marker-fusion block.
struct FusionParams {
    FusionConfig config;
    nx::Linear bottleneck;          // d_emb -> d_hid
    nx::Linear query, key, value;   // d_hid -> d_hid
    nx::Linear inverse_bottleneck;  // d_hid -> d_emb
    nx::Tensor sdpa_gamma, sdpa_beta;              // [d_hid]
    nx::Tensor bottleneck_gamma, bottleneck_beta;  // [d_emb]

    static FusionParams init(const FusionConfig& config, std::mt19937_64& rng);
    std::vector<nx::NamedTensor> named_parameters() const;
};

struct SdpaOutput {
    nx::Tensor mixed;      // [K x M x d_hid]
    nx::Tensor attention;  // [K x M x M], rows sum to one
};

struct FusionOutput {
    nx::Tensor fused;      // [K x d_emb]
    nx::Tensor attention;  // [K x M x M]
};

struct FusedBag {
    std::string sample_id;
    std::vector<GridCoord> coords;
    nx::Tensor fused;
    nx::Tensor attention;
};

// GELU(bottleneck(h_km)) for every patch and marker. H: [K x M x d_emb].
nx::Tensor contract(const nx::Tensor& embeddings, const FusionParams& params);

// Single-head attention across the M markers of each patch; no positional
// information, so marker order only permutes the result.
SdpaOutput marker_sdpa(const nx::Tensor& contracted, const FusionParams& params);

// Normalizes every (patch, marker) vector over its feature axis.
nx::Tensor marker_norm(const nx::Tensor& x, const nx::Tensor& gamma, const nx::Tensor& beta, double eps);

// Full block: contract, attend, residual + norm, expand, residual + norm,
// mean over markers.
FusionOutput fuse(const nx::Tensor& embeddings, const FusionParams& params);
FusedBag fuse(const EmbeddedBag& bag, const FusionParams& params);

}  // namespace fluoro::fusion

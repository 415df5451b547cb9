#include "fluoro/fusion/fusion.hpp"

#include <cmath>
#include <set>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/ops.hpp"

namespace fluoro::fusion {

void EmbeddedBag::validate() const {
    if (embeddings.size() != num_patches * num_markers * embed_dim) {
        throw DimensionError("bag '" + sample_id + "': payload holds " + std::to_string(embeddings.size()) +
                             " values, expected " + std::to_string(num_patches * num_markers * embed_dim));
    }
    if (coords.size() != num_patches) {
        throw DimensionError("bag '" + sample_id + "': " + std::to_string(coords.size()) + " coordinates for " +
                             std::to_string(num_patches) + " patches");
    }
    if (!channel_names.empty() && channel_names.size() != num_markers) {
        throw DimensionError("bag '" + sample_id + "': channel name count differs from marker count");
    }
    std::set<GridCoord> unique(coords.begin(), coords.end());
    if (unique.size() != coords.size()) throw FormatError("bag '" + sample_id + "': duplicate patch coordinates");
}

nx::Tensor EmbeddedBag::tensor() const {
    validate();
    if (num_patches == 0 || num_markers == 0 || embed_dim == 0) {
        throw DimensionError("bag '" + sample_id + "' is empty; fusion needs K, M, d_emb >= 1");
    }
    return nx::Tensor::from({num_patches, num_markers, embed_dim},
                            std::vector<double>(embeddings.begin(), embeddings.end()));
}

FusionParams FusionParams::init(const FusionConfig& config, std::mt19937_64& rng) {
    if (config.embed_dim == 0 || config.hidden_dim == 0) throw ConfigError("fusion dims must be positive");
    if (config.hidden_dim > config.embed_dim) {
        throw ConfigError("fusion hidden dim " + std::to_string(config.hidden_dim) + " exceeds embedding dim " +
                          std::to_string(config.embed_dim));
    }
    const auto e = config.embed_dim, h = config.hidden_dim;
    FusionParams p;
    p.config = config;
    p.bottleneck = nx::Linear::init(e, h, rng);
    p.query = nx::Linear::init(h, h, rng, config.qkv_bias);
    p.key = nx::Linear::init(h, h, rng, config.qkv_bias);
    p.value = nx::Linear::init(h, h, rng, config.qkv_bias);
    p.inverse_bottleneck = nx::Linear::init(h, e, rng);
    p.sdpa_gamma = nx::Tensor::full({h}, 1.0, true);
    p.sdpa_beta = nx::Tensor::zeros({h}, true);
    p.bottleneck_gamma = nx::Tensor::full({e}, 1.0, true);
    p.bottleneck_beta = nx::Tensor::zeros({e}, true);
    return p;
}

std::vector<nx::NamedTensor> FusionParams::named_parameters() const {
    std::vector<nx::NamedTensor> out;
    bottleneck.append_parameters("fusion.bottleneck", out);
    query.append_parameters("fusion.query", out);
    key.append_parameters("fusion.key", out);
    value.append_parameters("fusion.value", out);
    inverse_bottleneck.append_parameters("fusion.inverse_bottleneck", out);
    out.push_back({"fusion.sdpa_norm.gamma", sdpa_gamma});
    out.push_back({"fusion.sdpa_norm.beta", sdpa_beta});
    out.push_back({"fusion.bottleneck_norm.gamma", bottleneck_gamma});
    out.push_back({"fusion.bottleneck_norm.beta", bottleneck_beta});
    return out;
}

namespace {

void require_bag_shape(const nx::Tensor& h, std::size_t feature_dim, const char* what) {
    if (h.rank() != 3 || h.dim(0) == 0 || h.dim(1) == 0 || h.dim(2) != feature_dim) {
        throw DimensionError(std::string(what) + ": expected [K x M x " + std::to_string(feature_dim) + "], got " +
                             nx::shape_string(h.shape()));
    }
}

}  // namespace

nx::Tensor contract(const nx::Tensor& embeddings, const FusionParams& params) {
    require_bag_shape(embeddings, params.config.embed_dim, "contract");
    const auto k = embeddings.dim(0), m = embeddings.dim(1);
    auto flat = nx::reshape(embeddings, {k * m, params.config.embed_dim});
    auto hidden = nx::gelu(nx::linear(flat, params.bottleneck));
    return nx::reshape(hidden, {k, m, params.config.hidden_dim});
}

SdpaOutput marker_sdpa(const nx::Tensor& contracted, const FusionParams& params) {
    const auto d = params.config.hidden_dim;
    require_bag_shape(contracted, d, "marker_sdpa");
    const auto k = contracted.dim(0), m = contracted.dim(1);
    auto flat = nx::reshape(contracted, {k * m, d});
    auto q = nx::reshape(nx::linear(flat, params.query), {k, m, d});
    auto keys = nx::reshape(nx::linear(flat, params.key), {k, m, d});
    auto v = nx::reshape(nx::linear(flat, params.value), {k, m, d});
    auto scores = nx::scale(nx::bmm(q, nx::transpose(keys)), 1.0 / std::sqrt(static_cast<double>(d)));
    auto attention = nx::softmax(scores, 2);
    return {nx::bmm(attention, v), attention};
}

nx::Tensor marker_norm(const nx::Tensor& x, const nx::Tensor& gamma, const nx::Tensor& beta, double eps) {
    return nx::normalize_last(x, gamma, beta, eps);
}

FusionOutput fuse(const nx::Tensor& embeddings, const FusionParams& params) {
    require_bag_shape(embeddings, params.config.embed_dim, "fuse");
    const auto k = embeddings.dim(0), m = embeddings.dim(1);
    const auto e = params.config.embed_dim, h = params.config.hidden_dim;
    const double eps = params.config.eps;

    auto contracted = contract(embeddings, params);
    auto [mixed, attention] = marker_sdpa(contracted, params);
    auto a = marker_norm(nx::add(mixed, contracted), params.sdpa_gamma, params.sdpa_beta, eps);
    auto expanded = nx::gelu(nx::linear(nx::reshape(a, {k * m, h}), params.inverse_bottleneck));
    auto restored = nx::add(nx::reshape(expanded, {k, m, e}), embeddings);
    auto normalized = marker_norm(restored, params.bottleneck_gamma, params.bottleneck_beta, eps);
    return {nx::mean(normalized, 1), attention};
}

FusedBag fuse(const EmbeddedBag& bag, const FusionParams& params) {
    auto out = fuse(bag.tensor(), params);
    return {bag.sample_id, bag.coords, out.fused, out.attention};
}

}  // namespace fluoro::fusion

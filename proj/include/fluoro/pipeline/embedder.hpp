#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "fluoro/fusion/fusion.hpp"
#include "fluoro/pipeline/image.hpp"
#include "fluoro/pipeline/patches.hpp"

namespace fluoro::pipeline {

/// Three-plane image patch [3][height][width] with values in [0, 1].
struct RgbPatch {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;
};

// Repeats a single plane along a new leading colour axis.
RgbPatch gray_to_rgb(std::span<const float> plane, std::size_t height, std::size_t width);

/// Maps an RGB patch to a d_emb vector.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string name() const = 0;
    virtual std::size_t embed_dim() const = 0;
    virtual bool deterministic() const = 0;
    virtual std::vector<float> embed(const RgbPatch& patch) const = 0;
};

/// tanh(W x + b) for a seeded random projection W of the flattened patch.
/// W ~ U(-sqrt(3/n), sqrt(3/n)) for n input values, b = 0 unless enabled.
/// Projection matrices are cached per input size.
class StubEmbedder final : public Embedder {
public:
    explicit StubEmbedder(std::size_t embed_dim, std::uint64_t seed = 0x5eed, bool with_bias = false);

    std::string name() const override { return "stub"; }
    std::size_t embed_dim() const override { return embed_dim_; }
    bool deterministic() const override { return true; }
    std::vector<float> embed(const RgbPatch& patch) const override;

    std::uint64_t seed() const { return seed_; }

private:
    struct Projection {
        std::vector<float> weight;  // [d_emb][n]
        std::vector<float> bias;    // [d_emb]
    };
    const Projection& projection_for(std::size_t inputs) const;

    std::size_t embed_dim_;
    std::uint64_t seed_;
    bool with_bias_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, std::shared_ptr<const Projection>> cache_;
};

/// mIF: every channel of every patch goes through gray_to_rgb and the
/// embedder, giving K x M x d_emb. H&E: the three colour planes form one RGB
/// patch, giving K x 1 x d_emb. Embedder failures become IoError naming the
/// patch coordinate.
fusion::EmbeddedBag embed_bag(const std::vector<Patch>& patches, const Embedder& embedder,
                              const std::vector<std::string>& channel_names, const std::string& sample_id,
                              Modality modality);

}  // namespace fluoro::pipeline

#include "fluoro/pipeline/embedder.hpp"

#include <cmath>
#include <random>

#include "fluoro/errors.hpp"

namespace fluoro::pipeline {

RgbPatch gray_to_rgb(std::span<const float> plane, std::size_t height, std::size_t width) {
    if (plane.size() != height * width) throw DimensionError("gray_to_rgb: plane size does not match extents");
    RgbPatch out{height, width, std::vector<float>(3 * plane.size())};
    for (std::size_t c = 0; c < 3; ++c) std::copy(plane.begin(), plane.end(), out.data.begin() + c * plane.size());
    return out;
}

StubEmbedder::StubEmbedder(std::size_t embed_dim, std::uint64_t seed, bool with_bias)
    : embed_dim_(embed_dim), seed_(seed), with_bias_(with_bias) {
    if (embed_dim == 0) throw ConfigError("stub embedder needs a positive embedding dimension");
}

const StubEmbedder::Projection& StubEmbedder::projection_for(std::size_t inputs) const {
    std::lock_guard lock(mutex_);
    auto& slot = cache_[inputs];
    if (!slot) {
        auto p = std::make_shared<Projection>();
        std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (inputs + 1)));
        const float bound = static_cast<float>(std::sqrt(3.0 / static_cast<double>(inputs)));
        std::uniform_real_distribution<float> dist(-bound, bound);
        p->weight.resize(embed_dim_ * inputs);
        for (auto& w : p->weight) w = dist(rng);
        p->bias.assign(embed_dim_, 0.0f);
        if (with_bias_) {
            std::uniform_real_distribution<float> bias_dist(-0.5f, 0.5f);
            for (auto& b : p->bias) b = bias_dist(rng);
        }
        slot = std::move(p);
    }
    return *slot;
}

std::vector<float> StubEmbedder::embed(const RgbPatch& patch) const {
    if (patch.data.size() != 3 * patch.height * patch.width || patch.data.empty()) {
        throw DimensionError("stub embedder: malformed RGB patch");
    }
    const auto n = patch.data.size();
    const auto& proj = projection_for(n);
    std::vector<float> out(embed_dim_);
    for (std::size_t j = 0; j < embed_dim_; ++j) {
        const float* w = proj.weight.data() + j * n;
        double acc = proj.bias[j];
        for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(w[i]) * patch.data[i];
        out[j] = static_cast<float>(std::tanh(acc));
    }
    return out;
}

fusion::EmbeddedBag embed_bag(const std::vector<Patch>& patches, const Embedder& embedder,
                              const std::vector<std::string>& channel_names, const std::string& sample_id,
                              Modality modality) {
    fusion::EmbeddedBag bag;
    bag.sample_id = sample_id;
    bag.embed_dim = embedder.embed_dim();
    bag.num_patches = patches.size();
    if (modality == Modality::he) {
        bag.num_markers = 1;
        bag.channel_names = {"HE"};
    } else {
        bag.num_markers = channel_names.size();
        bag.channel_names = channel_names;
    }
    bag.embeddings.reserve(bag.num_patches * bag.num_markers * bag.embed_dim);

    for (const auto& patch : patches) {
        bag.coords.push_back(patch.coord);
        const auto area = patch.size * patch.size;
        std::vector<RgbPatch> inputs;
        if (modality == Modality::he) {
            if (patch.planes != 3) throw DimensionError("H&E patch must carry three colour planes");
            inputs.push_back(RgbPatch{patch.size, patch.size, patch.pixels});
        } else {
            if (patch.planes != bag.num_markers) throw DimensionError("patch plane count differs from channel count");
            for (std::size_t m = 0; m < patch.planes; ++m)
                inputs.push_back(gray_to_rgb({patch.plane(m), area}, patch.size, patch.size));
        }
        for (const auto& input : inputs) {
            std::vector<float> v;
            try {
                v = embedder.embed(input);
            } catch (const std::exception& e) {
                throw IoError("embedder '" + embedder.name() + "' failed at patch (" + std::to_string(patch.coord.row) +
                              "," + std::to_string(patch.coord.col) + "): " + e.what());
            }
            if (v.size() != bag.embed_dim) {
                throw IoError("embedder '" + embedder.name() + "' returned " + std::to_string(v.size()) +
                              " values at patch (" + std::to_string(patch.coord.row) + "," +
                              std::to_string(patch.coord.col) + ")");
            }
            bag.embeddings.insert(bag.embeddings.end(), v.begin(), v.end());
        }
    }
    bag.validate();
    return bag;
}

}  // namespace fluoro::pipeline

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fluoro/fusion/fusion.hpp"
#include "fluoro/pipeline/manifest.hpp"

namespace fluoro::trainer {

struct Sample {
    pipeline::ManifestEntry entry;
    fusion::EmbeddedBag bag;
    nx::Tensor embeddings;  // [K x M x d_emb], built once
};

/// A cohort of bags sharing one marker panel and embedding width.
struct Dataset {
    std::vector<Sample> samples;
    std::map<std::string, std::size_t> by_id;

    std::size_t num_markers() const;
    std::size_t embed_dim() const;
    std::vector<pipeline::ManifestEntry> manifest() const;
    const Sample& at(const std::string& sample_id) const;
    std::vector<const Sample*> select(std::span<const std::string> ids) const;

    // FormatError when bags disagree on M or d_emb, or a bag is empty.
    static Dataset from_bags(std::vector<pipeline::ManifestEntry> entries, std::vector<fusion::EmbeddedBag> bags);
};

// Reads <dir>/manifest.csv and every bag it lists.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace fluoro::trainer

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fluoro/numerics/tensor.hpp"
#include "fluoro/survival/survival.hpp"
#include "fluoro/trainer/config.hpp"
#include "fluoro/trainer/model.hpp"

namespace fluoro::trainer {

// Checkpoint layout, integers little-endian, reals as IEEE-754 binary64:
//   "FLCK" | u32 version
//   u32 length | UTF-8 JSON training config
//   u32 d_emb | u32 epoch | f64 validation C-index (NaN when undefined)
//   u32 cutoff count | f64 cutoffs
//   u32 tensor count | per tensor: u32 length | name | u32 rank | u32 extents | f64 values
inline constexpr char kCheckpointMagic[4] = {'F', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
    std::string name;
    nx::Shape shape;
    std::vector<double> values;

    bool operator==(const StoredTensor&) const = default;
};

struct Checkpoint {
    TrainConfig config;
    std::size_t embed_dim = 0;
    std::size_t epoch = 0;  // 0 = initialisation
    double val_c_index = 0.0;
    survival::BinSpec bins;
    std::vector<StoredTensor> tensors;

    static Checkpoint capture(const Model& model, const TrainConfig& config, const survival::BinSpec& bins,
                              std::size_t epoch, double val_c_index);
    // Rebuilds the model and loads every tensor; FormatError when names or
    // shapes disagree with the configured architecture.
    Model restore() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace fluoro::trainer

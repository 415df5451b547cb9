#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fluoro/fusion/fusion.hpp"

namespace fluoro::pipeline {

// Bag file layout, all integers little-endian:
//   "FLBG" | u32 version | u32 K | u32 M | u32 d_emb
//   M x (u32 byte length | UTF-8 channel name)
//   K x (u32 row | u32 col)
//   K*M*d_emb x f32, row-major [K][M][d_emb]
inline constexpr char kBagMagic[4] = {'F', 'L', 'B', 'G'};
inline constexpr std::uint32_t kBagVersion = 1;

std::vector<std::uint8_t> encode_bag(const fusion::EmbeddedBag& bag);
// The sample id is not stored in the file; `sample_id` is attached as given.
fusion::EmbeddedBag decode_bag(std::span<const std::uint8_t> bytes, const std::string& sample_id = {});

void write_bag(const std::filesystem::path& path, const fusion::EmbeddedBag& bag);
// Sample id defaults to the file stem.
fusion::EmbeddedBag read_bag(const std::filesystem::path& path);

}  // namespace fluoro::pipeline

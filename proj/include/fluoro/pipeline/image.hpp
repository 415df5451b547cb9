#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fluoro::pipeline {

enum class Modality {
    mif,  // one grayscale image per marker channel, bright signal on dark
    he,   // one RGB brightfield image, dark tissue on white
};

std::string to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// One intensity plane, 8- or 16-bit, row-major.
struct Channel {
    std::size_t height = 0;
    std::size_t width = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> pixels;

    std::uint16_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
    double max_value() const { return bit_depth == 16 ? 65535.0 : 255.0; }
};

/// For mIF: M marker channels. For H&E: exactly three planes (R, G, B).
struct SlideImage {
    std::string sample_id;
    Modality modality = Modality::mif;
    std::vector<Channel> channels;
    std::vector<std::string> channel_names;
    std::optional<double> pixel_spacing;

    std::size_t height() const { return channels.empty() ? 0 : channels.front().height; }
    std::size_t width() const { return channels.empty() ? 0 : channels.front().width; }

    // Throws FormatError / ConfigError.
    void validate() const;
};

// Planes of a PNG file: 1 for grayscale, 3 for colour (alpha dropped,
// palettes expanded).
std::vector<Channel> read_png(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Channel& channel);
// 8-bit palette image; palette holds (r,g,b) triples.
void write_png_indexed(const std::filesystem::path& path, std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& indices,
                       const std::vector<std::uint8_t>& palette_rgb);

/// Loads a slide from a directory of PNG files.
///
/// mIF: every `*.png` is one marker channel (grayscale), named by its file
/// stem; `channels.txt` (one name per line) fixes the order, otherwise file
/// names are sorted. H&E: the directory must hold exactly one image.
SlideImage load_slide(const std::filesystem::path& dir, Modality modality);

}  // namespace fluoro::pipeline

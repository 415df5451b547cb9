#include "fluoro/pipeline/image.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include "fluoro/errors.hpp"

namespace fluoro::pipeline {

namespace fs = std::filesystem;

std::string to_string(Modality m) { return m == Modality::he ? "he" : "mif"; }

Modality modality_from_string(std::string_view s) {
    if (s == "mif") return Modality::mif;
    if (s == "he") return Modality::he;
    throw ConfigError("unknown modality '" + std::string(s) + "' (expected mif or he)");
}

void SlideImage::validate() const {
    if (channels.empty()) throw FormatError("slide '" + sample_id + "' has no channels");
    if (channel_names.size() != channels.size()) throw FormatError("slide '" + sample_id + "': channel names mismatch");
    for (const auto& ch : channels) {
        if (ch.height != height() || ch.width != width()) {
            throw FormatError("slide '" + sample_id + "': channels differ in extent");
        }
        if (ch.pixels.size() != ch.height * ch.width) throw FormatError("slide '" + sample_id + "': pixel count");
        if (ch.bit_depth != 8 && ch.bit_depth != 16) throw FormatError("slide '" + sample_id + "': bit depth");
    }
    if (height() == 0 || width() == 0) throw FormatError("slide '" + sample_id + "' is empty");
    if (modality == Modality::he && channels.size() != 3) {
        throw ConfigError("slide '" + sample_id + "': H&E slides carry exactly three colour planes");
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int depth = 0;
    int planes = 0;
    std::vector<png_byte> bytes;
};

// libpng reports errors through longjmp; nothing with a destructor may be
// constructed between setjmp and the libpng calls.
bool decode_png(png_structp png, png_infop info, std::FILE* fp, DecodedPng& out) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, fp);
    png_read_info(png, info);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.depth = png_get_bit_depth(png, info);
    out.planes = png_get_channels(png, info);
    const auto stride = png_get_rowbytes(png, info);
    out.bytes.resize(stride * out.height);
    for (png_uint_32 r = 0; r < out.height; ++r) png_read_row(png, out.bytes.data() + r * stride, nullptr);
    png_read_end(png, nullptr);
    return true;
}

bool encode_png(png_structp png, png_infop info, std::FILE* fp, png_uint_32 width, png_uint_32 height, int depth,
                int color_type, const png_byte* bytes, std::size_t stride, const png_color* palette,
                int palette_size) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (palette) png_set_PLTE(png, info, palette, palette_size);
    png_write_info(png, info);
    for (png_uint_32 r = 0; r < height; ++r) png_write_row(png, bytes + r * stride);
    png_write_end(png, nullptr);
    return true;
}

void write_png_bytes(const fs::path& path, png_uint_32 width, png_uint_32 height, int depth, int color_type,
                     const std::vector<png_byte>& bytes, std::size_t stride, const std::vector<png_color>& palette) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    const bool ok = encode_png(png, info, fp.get(), width, height, depth, color_type, bytes.data(), stride,
                               palette.empty() ? nullptr : palette.data(), static_cast<int>(palette.size()));
    png_destroy_write_struct(&png, &info);
    if (!ok) throw IoError("failed to encode PNG '" + path.string() + "'");
}

}  // namespace

std::vector<Channel> read_png(const fs::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open '" + path.string() + "'");
    png_byte signature[8] = {};
    if (std::fread(signature, 1, 8, fp.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
        throw FormatError("'" + path.string() + "' is not a PNG file");
    }
    std::rewind(fp.get());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    DecodedPng decoded;
    const bool ok = decode_png(png, info, fp.get(), decoded);
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw FormatError("failed to decode PNG '" + path.string() + "'");
    if (decoded.planes != 1 && decoded.planes != 3) {
        throw FormatError("'" + path.string() + "': unsupported channel layout");
    }

    const std::size_t w = decoded.width, h = decoded.height, planes = static_cast<std::size_t>(decoded.planes);
    const std::size_t bytes_per_sample = decoded.depth == 16 ? 2 : 1;
    std::vector<Channel> out(planes, Channel{h, w, decoded.depth == 16 ? 16 : 8, std::vector<std::uint16_t>(h * w)});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t p = 0; p < planes; ++p) {
            const auto* s = decoded.bytes.data() + (i * planes + p) * bytes_per_sample;
            out[p].pixels[i] = bytes_per_sample == 2 ? static_cast<std::uint16_t>((s[0] << 8) | s[1]) : s[0];
        }
    }
    return out;
}

void write_png_gray(const fs::path& path, const Channel& channel) {
    const std::size_t bytes_per_sample = channel.bit_depth == 16 ? 2 : 1;
    const std::size_t stride = channel.width * bytes_per_sample;
    std::vector<png_byte> bytes(stride * channel.height);
    for (std::size_t i = 0; i < channel.pixels.size(); ++i) {
        const auto v = channel.pixels[i];
        if (bytes_per_sample == 2) {
            bytes[2 * i] = static_cast<png_byte>(v >> 8);
            bytes[2 * i + 1] = static_cast<png_byte>(v & 0xff);
        } else {
            bytes[i] = static_cast<png_byte>(std::min<std::uint16_t>(v, 255));
        }
    }
    write_png_bytes(path, static_cast<png_uint_32>(channel.width), static_cast<png_uint_32>(channel.height),
                    channel.bit_depth == 16 ? 16 : 8, PNG_COLOR_TYPE_GRAY, bytes, stride, {});
}

void write_png_indexed(const fs::path& path, std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& indices, const std::vector<std::uint8_t>& palette_rgb) {
    if (indices.size() != height * width) throw DimensionError("indexed PNG: index count mismatch");
    if (palette_rgb.empty() || palette_rgb.size() % 3 != 0 || palette_rgb.size() > 256 * 3) {
        throw DimensionError("indexed PNG: palette must hold 1..256 RGB triples");
    }
    std::vector<png_color> palette(palette_rgb.size() / 3);
    for (std::size_t i = 0; i < palette.size(); ++i)
        palette[i] = {palette_rgb[3 * i], palette_rgb[3 * i + 1], palette_rgb[3 * i + 2]};
    for (auto idx : indices)
        if (idx >= palette.size()) throw DimensionError("indexed PNG: index outside palette");
    std::vector<png_byte> bytes(indices.begin(), indices.end());
    write_png_bytes(path, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                    PNG_COLOR_TYPE_PALETTE, bytes, width, palette);
}

SlideImage load_slide(const fs::path& dir, Modality modality) {
    if (!fs::is_directory(dir)) throw IoError("slide directory '" + dir.string() + "' not found");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw FormatError("no PNG images in '" + dir.string() + "'");

    SlideImage slide;
    slide.sample_id = dir.filename().string();
    if (slide.sample_id.empty()) slide.sample_id = dir.parent_path().filename().string();
    slide.modality = modality;

    if (modality == Modality::he) {
        if (files.size() != 1) {
            throw ConfigError("H&E mode expects one RGB image per slide, found " + std::to_string(files.size()) +
                              " in '" + dir.string() + "'");
        }
        auto planes = read_png(files.front());
        if (planes.size() == 1) planes = {planes[0], planes[0], planes[0]};
        slide.channels = std::move(planes);
        slide.channel_names = {"R", "G", "B"};
    } else {
        const auto order_file = dir / "channels.txt";
        if (fs::exists(order_file)) {
            std::ifstream in(order_file);
            std::vector<fs::path> ordered;
            for (std::string name; std::getline(in, name);) {
                if (name.empty()) continue;
                const auto p = dir / (name + ".png");
                if (!fs::exists(p)) throw FormatError("channels.txt lists '" + name + "' but no such image exists");
                ordered.push_back(p);
            }
            files = std::move(ordered);
        }
        for (const auto& f : files) {
            auto planes = read_png(f);
            if (planes.size() != 1) throw FormatError("mIF channel '" + f.string() + "' is not grayscale");
            slide.channels.push_back(std::move(planes.front()));
            slide.channel_names.push_back(f.stem().string());
        }
    }
    slide.validate();
    return slide;
}

}  // namespace fluoro::pipeline

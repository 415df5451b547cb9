#include "fluoro/pipeline/patches.hpp"

#include "fluoro/errors.hpp"

namespace fluoro::pipeline {

std::vector<Patch> extract_patches(const SlideImage& slide, const ForegroundMask& mask, std::size_t patch_size) {
    slide.validate();
    if (patch_size == 0) throw ConfigError("patch size must be positive");
    if (mask.cells.size() != mask.rows * mask.cols) throw DimensionError("foreground mask buffer mismatch");

    std::vector<Patch> patches;
    const auto planes = slide.channels.size();
    for (std::size_t r = 0; r < mask.rows; ++r) {
        for (std::size_t c = 0; c < mask.cols; ++c) {
            if (!mask.at(r, c)) continue;
            Patch p{{static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)}, patch_size, planes,
                    std::vector<float>(planes * patch_size * patch_size, 0.0f)};
            const auto top = r * mask.factor, left = c * mask.factor;
            for (std::size_t m = 0; m < planes; ++m) {
                const auto& ch = slide.channels[m];
                const auto scale = static_cast<float>(1.0 / ch.max_value());
                float* dst = p.pixels.data() + m * patch_size * patch_size;
                for (std::size_t y = 0; y < patch_size && top + y < ch.height; ++y)
                    for (std::size_t x = 0; x < patch_size && left + x < ch.width; ++x)
                        dst[y * patch_size + x] = static_cast<float>(ch.at(top + y, left + x)) * scale;
            }
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

}  // namespace fluoro::pipeline

#pragma once

#include <cstddef>
#include <vector>

#include "fluoro/pipeline/foreground.hpp"
#include "fluoro/pipeline/image.hpp"
#include "fluoro/types.hpp"

namespace fluoro::pipeline {

/// Pixels of one patch, normalised to [0, 1] by the channel's bit depth.
struct Patch {
    GridCoord coord;
    std::size_t size = 0;
    std::size_t planes = 0;
    std::vector<float> pixels;  // [planes][size][size]

    const float* plane(std::size_t p) const { return pixels.data() + p * size * size; }
};

/// One patch per foreground mask cell, in row-major cell order. The patch at
/// cell (r, c) starts at pixel (r * mask.factor, c * mask.factor); pixels
/// beyond the slide edge are zero.
std::vector<Patch> extract_patches(const SlideImage& slide, const ForegroundMask& mask, std::size_t patch_size = 224);

}  // namespace fluoro::pipeline

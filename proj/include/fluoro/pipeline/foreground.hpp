#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fluoro/pipeline/image.hpp"

namespace fluoro::pipeline {

using Histogram = std::array<std::uint64_t, 256>;

/// Otsu's threshold: the bin t maximising the between-class variance of
/// {0..t} against {t+1..255}; the lowest t wins ties. Pixels in bins above
/// t form the bright class. Throws DegenerateInputError with fewer than two
/// occupied bins.
int otsu_threshold(const Histogram& histogram);

/// One cell per `factor` x `factor` block of the slide.
struct ForegroundMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t factor = 1;
    std::vector<std::uint8_t> cells;
    std::vector<std::string> warnings;

    bool at(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
    std::size_t count() const;
};

// Mean-pools a channel (or any plane of doubles) by `factor`; edge blocks
// average over the pixels they actually contain.
std::vector<double> downsample(const Channel& channel, std::size_t factor);

// Maps downsampled intensities to 256 bins: 8-bit values directly, 16-bit
// values by min-max rescaling of the plane.
std::vector<std::uint8_t> to_bins(std::span<const double> values, int bit_depth);

/// mIF: per-channel Otsu on the downsampled plane, foreground = above the
/// threshold, OR-fused across channels. A constant channel has no threshold;
/// it is skipped with a warning when blank (zero) and counts as entirely
/// foreground when lit. All channels blank -> DegenerateInputError.
/// H&E: luminance of the downsampled RGB, foreground = at or below the
/// threshold (tissue is darker than the background).
ForegroundMask foreground_mask(const SlideImage& slide, std::size_t factor = 224);

}  // namespace fluoro::pipeline

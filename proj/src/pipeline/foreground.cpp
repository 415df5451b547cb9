#include "fluoro/pipeline/foreground.hpp"

#include <algorithm>
#include <cmath>

#include "fluoro/errors.hpp"

namespace fluoro::pipeline {

int otsu_threshold(const Histogram& histogram) {
    std::uint64_t total = 0;
    double weighted_total = 0.0;
    int occupied = 0;
    for (int i = 0; i < 256; ++i) {
        total += histogram[i];
        weighted_total += static_cast<double>(i) * static_cast<double>(histogram[i]);
        occupied += histogram[i] > 0;
    }
    if (occupied < 2) throw DegenerateInputError("otsu: histogram has fewer than two occupied bins");

    const double n = static_cast<double>(total);
    double below = 0.0, weighted_below = 0.0, best = -1.0;
    int threshold = 0;
    for (int t = 0; t < 255; ++t) {
        below += static_cast<double>(histogram[t]);
        weighted_below += static_cast<double>(t) * static_cast<double>(histogram[t]);
        const double above = n - below;
        if (below == 0.0 || above == 0.0) continue;
        // n^2 * sigma_B^2 = (n * S_0 - n_0 * S)^2 / (n_0 * n_1)
        const double diff = n * weighted_below - below * weighted_total;
        const double score = diff * diff / (below * above);
        if (score > best) {
            best = score;
            threshold = t;
        }
    }
    return threshold;
}

std::size_t ForegroundMask::count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

std::vector<double> downsample(const Channel& channel, std::size_t factor) {
    if (factor == 0) throw ConfigError("downsample factor must be positive");
    const auto rows = (channel.height + factor - 1) / factor;
    const auto cols = (channel.width + factor - 1) / factor;
    std::vector<double> sums(rows * cols, 0.0);
    std::vector<std::size_t> counts(rows * cols, 0);
    for (std::size_t r = 0; r < channel.height; ++r) {
        for (std::size_t c = 0; c < channel.width; ++c) {
            const auto cell = (r / factor) * cols + c / factor;
            sums[cell] += channel.at(r, c);
            ++counts[cell];
        }
    }
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] /= static_cast<double>(counts[i]);
    return sums;
}

std::vector<std::uint8_t> to_bins(std::span<const double> values, int bit_depth) {
    std::vector<std::uint8_t> bins(values.size());
    if (bit_depth == 16) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        const double span = values.empty() ? 0.0 : *hi - *lo;
        for (std::size_t i = 0; i < values.size(); ++i) {
            bins[i] = span > 0.0 ? static_cast<std::uint8_t>(std::lround((values[i] - *lo) / span * 255.0)) : 0;
        }
    } else {
        for (std::size_t i = 0; i < values.size(); ++i)
            bins[i] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(values[i]), 0, 255));
    }
    return bins;
}

namespace {

Histogram histogram_of(std::span<const std::uint8_t> bins) {
    Histogram h{};
    for (auto b : bins) ++h[b];
    return h;
}

}  // namespace

ForegroundMask foreground_mask(const SlideImage& slide, std::size_t factor) {
    slide.validate();
    if (factor == 0) throw ConfigError("foreground factor must be positive");
    ForegroundMask mask;
    mask.factor = factor;
    mask.rows = (slide.height() + factor - 1) / factor;
    mask.cols = (slide.width() + factor - 1) / factor;
    mask.cells.assign(mask.rows * mask.cols, 0);

    if (slide.modality == Modality::he) {
        const auto r = downsample(slide.channels[0], factor);
        const auto g = downsample(slide.channels[1], factor);
        const auto b = downsample(slide.channels[2], factor);
        std::vector<double> luminance(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) luminance[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        const auto bins = to_bins(luminance, slide.channels[0].bit_depth);
        const int t = otsu_threshold(histogram_of(bins));
        for (std::size_t i = 0; i < bins.size(); ++i) mask.cells[i] = bins[i] <= t;
        return mask;
    }

    std::size_t usable = 0;
    for (std::size_t m = 0; m < slide.channels.size(); ++m) {
        const auto& channel = slide.channels[m];
        const auto plane = downsample(channel, factor);
        const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
        const auto bins = to_bins(plane, channel.bit_depth);
        const auto hist = histogram_of(bins);
        const auto occupied = std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; });
        if (*lo == *hi || occupied < 2) {
            if (*hi > 0.0) {
                mask.warnings.push_back("channel '" + slide.channel_names[m] + "' is uniformly lit; all cells kept");
                std::fill(mask.cells.begin(), mask.cells.end(), std::uint8_t{1});
                ++usable;
            } else {
                mask.warnings.push_back("channel '" + slide.channel_names[m] + "' is blank; skipped");
            }
            continue;
        }
        const int t = otsu_threshold(hist);
        for (std::size_t i = 0; i < bins.size(); ++i)
            if (bins[i] > t) mask.cells[i] = 1;
        ++usable;
    }
    if (usable == 0) throw DegenerateInputError("slide '" + slide.sample_id + "': every channel is blank");
    return mask;
}

}  // namespace fluoro::pipeline

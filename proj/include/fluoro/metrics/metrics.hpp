#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fluoro/numerics/tensor.hpp"
#include "fluoro/types.hpp"

namespace fluoro::metrics {

/// Values on the patch grid with a foreground mask; masked-out cells take no
/// part in any statistic.
struct HeatmapGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    static HeatmapGrid from_patches(std::span<const GridCoord> coords, std::span<const double> values);

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    bool inside(std::size_t r, std::size_t c) const { return mask[r * cols + c] != 0; }
    std::size_t foreground_count() const;
};

/// Integer grid of marker indices; -1 marks background.
struct IndexGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> values;
};

struct ConcordanceCounts {
    double concordant = 0.0;  // ties contribute 0.5
    std::size_t comparable = 0;
};

/// Harrell's C for survival scores: a pair with t_i < t_j is comparable when
/// sample i had the event, and concordant when score_i < score_j (a higher
/// score predicts longer survival). Score ties count one half.
/// Throws UndefinedMetricError when no pair is comparable.
double c_index(std::span<const double> scores, std::span<const double> times, std::span<const bool> censored);
ConcordanceCounts concordance_counts(std::span<const double> scores, std::span<const double> times,
                                     std::span<const bool> censored);

/// Moran's I with rook (4-neighbour) binary weights among foreground cells.
double morans_i(const HeatmapGrid& grid);

struct MarkerAttentionSummary {
    std::size_t num_markers = 0;
    std::vector<double> mean;     // [M x M]
    std::vector<double> zscored;  // [M x M]
};

/// Average of per-patch marker attention over each slide's top
/// ceil(fraction * K) patches by patch attention, then across slides.
/// attention_matrices[s]: [K_s x M x M]; patch_attention[s]: [K_s].
MarkerAttentionSummary avg_marker_attention(std::span<const nx::Tensor> attention_matrices,
                                            std::span<const nx::Tensor> patch_attention,
                                            double top_fraction = 0.10);

/// Per patch, the marker receiving the most attention (largest column sum of
/// A_k); lowest index wins ties.
IndexGrid argmax_marker_heatmap(const nx::Tensor& attention_matrices, std::span<const GridCoord> coords);

}  // namespace fluoro::metrics

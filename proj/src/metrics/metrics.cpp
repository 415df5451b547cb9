#include "fluoro/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fluoro/errors.hpp"

namespace fluoro::metrics {

namespace {

std::pair<std::size_t, std::size_t> grid_extent(std::span<const GridCoord> coords) {
    std::size_t rows = 0, cols = 0;
    for (const auto& c : coords) {
        rows = std::max<std::size_t>(rows, c.row + 1);
        cols = std::max<std::size_t>(cols, c.col + 1);
    }
    return {rows, cols};
}

// Fenwick tree over score ranks.
class RankCounter {
public:
    explicit RankCounter(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t rank) {
        for (auto i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // Number of inserted ranks < rank.
    std::size_t below(std::size_t rank) const {
        std::size_t total = 0;
        for (auto i = rank; i > 0; i -= i & (~i + 1)) total += tree_[i];
        return total;
    }

private:
    std::vector<std::size_t> tree_;
};

}  // namespace

HeatmapGrid HeatmapGrid::from_patches(std::span<const GridCoord> coords, std::span<const double> values) {
    if (coords.size() != values.size()) throw DimensionError("heatmap: coordinate and value counts differ");
    const auto [rows, cols] = grid_extent(coords);
    HeatmapGrid g{rows, cols, std::vector<double>(rows * cols, 0.0), std::vector<std::uint8_t>(rows * cols, 0)};
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto at = coords[i].row * cols + coords[i].col;
        if (g.mask[at]) throw FormatError("heatmap: duplicate coordinate");
        g.values[at] = values[i];
        g.mask[at] = 1;
    }
    return g;
}

std::size_t HeatmapGrid::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

ConcordanceCounts concordance_counts(std::span<const double> scores, std::span<const double> times,
                                     std::span<const bool> censored) {
    const auto n = scores.size();
    if (times.size() != n || censored.size() != n) throw DimensionError("c_index: input lengths differ");

    std::vector<double> sorted_scores(scores.begin(), scores.end());
    std::sort(sorted_scores.begin(), sorted_scores.end());
    sorted_scores.erase(std::unique(sorted_scores.begin(), sorted_scores.end()), sorted_scores.end());
    auto rank_of = [&](double s) {
        return static_cast<std::size_t>(std::lower_bound(sorted_scores.begin(), sorted_scores.end(), s) -
                                        sorted_scores.begin());
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] > times[b]; });

    // Walk from the longest time down; the counter holds every sample whose
    // time is strictly greater than the current group's.
    RankCounter later(sorted_scores.size());
    std::size_t inserted = 0;
    ConcordanceCounts counts;
    std::size_t concordant2 = 0;  // doubled, so half-ties stay integral
    for (std::size_t g = 0; g < n;) {
        std::size_t end = g;
        while (end < n && times[order[end]] == times[order[g]]) ++end;
        for (auto i = g; i < end; ++i) {
            const auto s = order[i];
            if (censored[s]) continue;
            const auto r = rank_of(scores[s]);
            const auto below_or_equal = later.below(r + 1);
            const auto below = later.below(r);
            const auto above = inserted - below_or_equal;
            counts.comparable += inserted;
            concordant2 += 2 * above + (below_or_equal - below);
        }
        for (auto i = g; i < end; ++i) {
            later.add(rank_of(scores[order[i]]));
            ++inserted;
        }
        g = end;
    }
    counts.concordant = static_cast<double>(concordant2) / 2.0;
    return counts;
}

double c_index(std::span<const double> scores, std::span<const double> times, std::span<const bool> censored) {
    if (scores.size() < 2) throw UndefinedMetricError("c_index: need at least two samples");
    const auto counts = concordance_counts(scores, times, censored);
    if (counts.comparable == 0) throw UndefinedMetricError("c_index: no comparable pairs");
    return counts.concordant / static_cast<double>(counts.comparable);
}

double morans_i(const HeatmapGrid& grid) {
    if (grid.values.size() != grid.rows * grid.cols || grid.mask.size() != grid.values.size()) {
        throw DimensionError("morans_i: grid buffers do not match extents");
    }
    const auto n = grid.foreground_count();
    if (n < 2) throw UndefinedMetricError("morans_i: need at least two foreground cells");

    double total = 0.0;
    for (std::size_t i = 0; i < grid.values.size(); ++i)
        if (grid.mask[i]) total += grid.values[i];
    const double mean = total / static_cast<double>(n);

    double variance_sum = 0.0, cross = 0.0, weight = 0.0;
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            if (!grid.inside(r, c)) continue;
            const double di = grid.at(r, c) - mean;
            variance_sum += di * di;
            // Each undirected edge once, counted for both (i,j) and (j,i).
            if (c + 1 < grid.cols && grid.inside(r, c + 1)) {
                cross += 2.0 * di * (grid.at(r, c + 1) - mean);
                weight += 2.0;
            }
            if (r + 1 < grid.rows && grid.inside(r + 1, c)) {
                cross += 2.0 * di * (grid.at(r + 1, c) - mean);
                weight += 2.0;
            }
        }
    }
    if (weight == 0.0) throw UndefinedMetricError("morans_i: no adjacent foreground cells");
    if (variance_sum == 0.0) throw UndefinedMetricError("morans_i: zero variance");
    return static_cast<double>(n) * cross / (weight * variance_sum);
}

MarkerAttentionSummary avg_marker_attention(std::span<const nx::Tensor> attention_matrices,
                                            std::span<const nx::Tensor> patch_attention, double top_fraction) {
    if (attention_matrices.size() != patch_attention.size()) {
        throw DimensionError("avg_marker_attention: slide counts differ");
    }
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("avg_marker_attention: fraction in (0,1]");
    MarkerAttentionSummary out;
    if (attention_matrices.empty()) return out;

    const auto m = attention_matrices.front().rank() == 3 ? attention_matrices.front().dim(1) : 0;
    out.num_markers = m;
    out.mean.assign(m * m, 0.0);
    for (std::size_t s = 0; s < attention_matrices.size(); ++s) {
        const auto& A = attention_matrices[s];
        const auto& a = patch_attention[s];
        if (A.rank() != 3 || A.dim(1) != m || A.dim(2) != m || a.rank() != 1 || a.dim(0) != A.dim(0) ||
            A.dim(0) == 0) {
            throw DimensionError("avg_marker_attention: slide " + std::to_string(s) + " has inconsistent shapes");
        }
        const auto k = A.dim(0);
        const auto take = std::min<std::size_t>(
            k, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(k) - 1e-9)));
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a[x] > a[y]; });
        std::vector<double> slide(m * m, 0.0);
        for (std::size_t t = 0; t < take; ++t)
            for (std::size_t e = 0; e < m * m; ++e) slide[e] += A[order[t] * m * m + e];
        for (std::size_t e = 0; e < m * m; ++e) out.mean[e] += slide[e] / static_cast<double>(take);
    }
    for (auto& v : out.mean) v /= static_cast<double>(attention_matrices.size());

    const double mu = std::accumulate(out.mean.begin(), out.mean.end(), 0.0) / static_cast<double>(m * m);
    double ss = 0.0;
    for (double v : out.mean) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(m * m));
    out.zscored.resize(m * m);
    for (std::size_t e = 0; e < m * m; ++e) out.zscored[e] = sd > 0.0 ? (out.mean[e] - mu) / sd : 0.0;
    return out;
}

IndexGrid argmax_marker_heatmap(const nx::Tensor& attention_matrices, std::span<const GridCoord> coords) {
    const auto& A = attention_matrices;
    if (A.rank() != 3 || A.dim(1) != A.dim(2) || A.dim(0) != coords.size()) {
        throw DimensionError("argmax_marker_heatmap: attention " + nx::shape_string(A.shape()) + " vs " +
                             std::to_string(coords.size()) + " coordinates");
    }
    const auto [rows, cols] = grid_extent(coords);
    IndexGrid grid{rows, cols, std::vector<int>(rows * cols, -1)};
    const auto m = A.dim(1);
    std::vector<double> column(m);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        std::fill(column.begin(), column.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) column[j] += A[(k * m + i) * m + j];
        std::size_t best = 0;
        for (std::size_t j = 1; j < m; ++j)
            if (column[j] > column[best]) best = j;
        grid.values[coords[k].row * cols + coords[k].col] = static_cast<int>(best);
    }
    return grid;
}

}  // namespace fluoro::metrics

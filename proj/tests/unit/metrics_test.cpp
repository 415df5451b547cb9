#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fluoro/errors.hpp"
#include "fluoro/metrics/metrics.hpp"
#include "fluoro/reference/reference.hpp"
#include "test_util.hpp"

using namespace fluoro;
using nx::Tensor;

namespace {

metrics::HeatmapGrid full_grid(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return {rows, cols, std::move(v), std::vector<std::uint8_t>(rows * cols, 1)};
}

// Box-smoothed noise on a rows x cols grid.
metrics::HeatmapGrid smoothed(std::size_t n, std::mt19937_64& rng, int radius) {
    std::normal_distribution<double> g;
    std::vector<double> raw(n * n), out(n * n, 0.0);
    for (auto& x : raw) x = g(rng);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            double acc = 0.0;
            int cnt = 0;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<long>(n) || cc >= static_cast<long>(n)) continue;
                    acc += raw[static_cast<std::size_t>(rr) * n + static_cast<std::size_t>(cc)];
                    ++cnt;
                }
            out[r * n + c] = acc / cnt;
        }
    return full_grid(n, n, out);
}

}  // namespace

TEST_CASE("c-index small cases") {
    std::vector<double> t{1, 2, 3};
    testing::Flags events{0, 0, 0};
    CHECK(metrics::c_index(std::vector<double>{0.1, 0.5, 0.9}, t, events.span()) == 1.0);
    CHECK(metrics::c_index(std::vector<double>{0.9, 0.5, 0.1}, t, events.span()) == 0.0);
    testing::Flags mixed{0, 1, 0};
    std::vector<double> s{0.2, 0.9, 0.4};
    const auto counts = metrics::concordance_counts(s, t, mixed.span());
    CHECK(counts.comparable == 2);
    CHECK(counts.concordant == 2.0);
    CHECK(metrics::c_index(s, t, mixed.span()) == 1.0);
    const auto [conc, comp] = reference::brute_concordance(s, t, mixed.span());
    CHECK(comp == 2);
    CHECK(conc == 2.0);
}

TEST_CASE("c-index ties and undefined cases") {
    std::vector<double> t{1, 2};
    testing::Flags ev{0, 0};
    CHECK(metrics::c_index(std::vector<double>{0.5, 0.5}, t, ev.span()) == 0.5);
    testing::Flags cen{1, 1};
    CHECK_THROWS_AS(metrics::c_index(std::vector<double>{0.1, 0.2}, t, cen.span()), UndefinedMetricError);
    std::vector<double> same{3, 3};
    CHECK_THROWS_AS(metrics::c_index(std::vector<double>{0.1, 0.2}, same, ev.span()), UndefinedMetricError);
    testing::Flags one{0};
    CHECK_THROWS_AS(metrics::c_index(std::vector<double>{0.1}, std::vector<double>{1}, one.span()),
                    UndefinedMetricError);
}

TEST_CASE("c-index equals brute force on random instances") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 49;
        std::vector<double> s(n), t(n);
        for (auto& x : s) x = static_cast<double>(rng() % 12);
        for (auto& x : t) x = static_cast<double>(rng() % 25);
        testing::Flags c(n, 0.3, rng);
        const auto [conc, comp] = reference::brute_concordance(s, t, c.span());
        const auto got = metrics::concordance_counts(s, t, c.span());
        CHECK(got.comparable == comp);
        CHECK(got.concordant == conc);
    }
}

TEST_CASE("c-index of negated scores is the complement") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 30;
        std::vector<double> s(n), neg(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = g(rng);
            neg[i] = -s[i];
            t[i] = std::abs(g(rng)) * 100.0;
        }
        testing::Flags c(n, 0.3, rng);
        CHECK(metrics::c_index(s, t, c.span()) + metrics::c_index(neg, t, c.span()) == doctest::Approx(1.0));
    }
}

TEST_CASE("Moran's I fixtures") {
    CHECK(std::abs(metrics::morans_i(full_grid(2, 2, {1, 0, 0, 1})) + 1.0) < 1e-12);
    const auto halves = full_grid(2, 2, {1, 1, 0, 0});
    CHECK(std::abs(metrics::morans_i(halves) - reference::double_loop_morans_i(halves)) < 1e-12);
    CHECK(metrics::morans_i(halves) == doctest::Approx(0.0));
    CHECK_THROWS_AS(metrics::morans_i(full_grid(2, 2, {3, 3, 3, 3})), UndefinedMetricError);
    metrics::HeatmapGrid lone{2, 2, {1, 0, 0, 1}, {1, 0, 0, 1}};
    CHECK_THROWS_AS(metrics::morans_i(lone), UndefinedMetricError);
    metrics::HeatmapGrid single{1, 1, {1}, {1}};
    CHECK_THROWS_AS(metrics::morans_i(single), UndefinedMetricError);
}

TEST_CASE("Moran's I matches the double loop and ignores translation") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t r = 2 + rng() % 7, c = 2 + rng() % 7;
        std::vector<GridCoord> coords;
        std::vector<double> v;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                if (rng() % 4 != 0) {
                    coords.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
                    v.push_back(u(rng));
                }
        if (coords.size() < 2) continue;
        const auto g = metrics::HeatmapGrid::from_patches(coords, v);
        double got = 0.0;
        try {
            got = metrics::morans_i(g);
        } catch (const UndefinedMetricError&) {
            continue;
        }
        CHECK(std::abs(got - reference::double_loop_morans_i(g)) < 1e-12);
        auto shifted = coords;
        for (auto& p : shifted) {
            p.row += 3;
            p.col += 5;
        }
        CHECK(std::abs(metrics::morans_i(metrics::HeatmapGrid::from_patches(shifted, v)) - got) < 1e-12);
    }
}

TEST_CASE("Moran's I separates noise from smooth fields") {
    double noise_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        noise_mean += metrics::morans_i(smoothed(32, rng, 0)) / 20.0;
        CHECK(metrics::morans_i(smoothed(32, rng, 2)) > 0.3);
    }
    CHECK(std::abs(noise_mean) < 0.05);
}

TEST_CASE("average marker attention") {
    auto A = Tensor::from({1, 2, 2}, {0.7, 0.3, 0.4, 0.6});
    auto a = Tensor::from({1}, {1.0});
    const std::vector<Tensor> As{A}, as{a};
    const auto one = metrics::avg_marker_attention(As, as);
    CHECK(one.mean == std::vector<double>{0.7, 0.3, 0.4, 0.6});

    // Identical matrices everywhere: the mean is that matrix and the z-scores centre on zero.
    std::vector<double> same;
    for (int k = 0; k < 5; ++k)
        for (double v : {0.1, 0.5, 0.4, 0.2, 0.2, 0.6, 0.3, 0.3, 0.4}) same.push_back(v);
    const std::vector<Tensor> A2{Tensor::from({5, 3, 3}, same), Tensor::from({5, 3, 3}, same)};
    const std::vector<Tensor> a2{Tensor::from({5}, {0.1, 0.2, 0.3, 0.2, 0.2}), Tensor::from({5}, {0.5, 0.1, 0.1, 0.2, 0.1})};
    const auto s = metrics::avg_marker_attention(A2, a2);
    CHECK(testing::max_abs_diff(s.mean, std::vector<double>{0.1, 0.5, 0.4, 0.2, 0.2, 0.6, 0.3, 0.3, 0.4}) < 1e-15);
    double zsum = 0.0;
    for (double z : s.zscored) zsum += z;
    CHECK(std::abs(zsum) < 1e-12);
}

TEST_CASE("average marker attention against recomputation") {
    std::mt19937_64 rng(24);
    std::vector<Tensor> As, as;
    std::vector<double> want(9, 0.0);
    const std::size_t Ks[] = {4, 12, 25};
    for (auto K : Ks) {
        auto A = testing::random_tensor({K, 3, 3}, rng, 0, 1, false);
        auto a = testing::random_tensor({K}, rng, 0, 1, false);
        const auto top = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(K)));
        std::vector<std::size_t> idx(K);
        for (std::size_t k = 0; k < K; ++k) idx[k] = k;
        std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return a[x] > a[y]; });
        for (std::size_t t = 0; t < top; ++t)
            for (std::size_t e = 0; e < 9; ++e) want[e] += A[idx[t] * 9 + e] / static_cast<double>(top) / 3.0;
        As.push_back(A);
        as.push_back(a);
    }
    const auto s = metrics::avg_marker_attention(As, as);
    CHECK(testing::max_abs_diff(s.mean, want) < 1e-12);
}

TEST_CASE("argmax marker heatmap") {
    // Column sums [0.9, 1.2, 0.9].
    auto A = Tensor::from({2, 3, 3}, {0.3, 0.4, 0.3, 0.3, 0.4, 0.3, 0.3, 0.4, 0.3,
                                      1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::vector<GridCoord> coords{{0, 1}, {1, 0}};
    const auto g = metrics::argmax_marker_heatmap(A, coords);
    CHECK(g.rows == 2);
    CHECK(g.cols == 2);
    CHECK(g.values == std::vector<int>{-1, 1, 0, -1});

    std::mt19937_64 rng(25);
    auto R = testing::random_tensor({6, 4, 4}, rng, 0, 1, false);
    std::vector<GridCoord> cs;
    for (std::uint32_t k = 0; k < 6; ++k) cs.push_back({k / 3, k % 3});
    const auto rg = metrics::argmax_marker_heatmap(R, cs);
    for (std::size_t k = 0; k < 6; ++k) {
        std::vector<double> col(4, 0.0);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) col[j] += R[(k * 4 + i) * 4 + j];
        const auto best = static_cast<int>(std::max_element(col.begin(), col.end()) - col.begin());
        CHECK(rg.values[cs[k].row * rg.cols + cs[k].col] == best);
    }
}

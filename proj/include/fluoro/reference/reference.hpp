#pragma once

// Straight-line reference implementations used as test oracles. They share
// no code with the library beyond the parameter containers they read.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fluoro/fusion/fusion.hpp"
#include "fluoro/metrics/metrics.hpp"
#include "fluoro/pipeline/foreground.hpp"
#include "fluoro/pooling/pooling.hpp"

namespace fluoro::reference {

// O(n^2) pair enumeration. Returns {concordant, comparable}.
std::pair<double, std::size_t> brute_concordance(std::span<const double> scores, std::span<const double> times,
                                                 std::span<const bool> censored);

// Dense n x n rook weight matrix over the foreground cells.
double double_loop_morans_i(const metrics::HeatmapGrid& grid);

// Evaluates the between-class variance at every threshold in exact integer
// arithmetic; lowest threshold wins ties. -1 when fewer than two bins are
// occupied.
int exhaustive_otsu(const pipeline::Histogram& histogram);

std::vector<double> survival_curve(std::span<const double> hazards);
double nll(std::span<const double> hazards, std::size_t bin, bool censored);
double risk(std::span<const double> hazards);

// numpy.percentile(x, q) with linear interpolation, q in [0, 100].
double percentile(std::vector<double> x, double q);

struct AdamWState {
    std::vector<double> m, v;
    int t = 0;
};

void adamw(std::vector<double>& p, const std::vector<double>& g, AdamWState& s, double lr, double b1, double b2,
           double eps, double wd);

struct FusionResult {
    std::vector<double> fused;      // [K x d_emb]
    std::vector<double> attention;  // [K x M x M]
};

// Loops over patches, markers and features; H is [K x M x d_emb] row-major.
FusionResult fuse(std::span<const double> H, std::size_t K, std::size_t M, const fusion::FusionParams& params);

struct PoolResult {
    std::vector<double> attention;  // [K]
    std::vector<double> bag;        // [d_emb]
    std::vector<double> logits;     // [N_bin]
};

PoolResult pool(std::span<const double> fused, std::size_t K, const pooling::GatedAttentionParams& attention,
                const pooling::ClassifierParams& classifier);

}  // namespace fluoro::reference

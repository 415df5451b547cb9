#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fluoro/numerics/tensor.hpp"

namespace fluoro::survival {

// Floor applied to every log argument in the likelihood.
inline constexpr double kLogFloor = 1e-12;

/// Interval cutoffs t_1 < ... < t_{N-1}. Bin i covers (t_i, t_{i+1}] with
/// t_0 = -inf and t_N = +inf, so a time equal to a cutoff falls in the lower bin.
struct BinSpec {
    std::vector<double> cutoffs;

    std::size_t num_bins() const noexcept { return cutoffs.size() + 1; }
    std::size_t bin_of(double time) const;
    void validate() const;

    bool operator==(const BinSpec&) const = default;
};

// censored = true means follow-up ended without the event (c = 1).
struct SurvivalTarget {
    double time = 0.0;
    bool censored = false;
    std::size_t bin = 0;
};

SurvivalTarget make_target(double time, bool censored, const BinSpec& bins);

struct SurvivalOutput {
    nx::Tensor hazards;
    nx::Tensor survival;
    nx::Tensor risk;
    nx::Tensor loss;
};

/// Quartile-style cutoffs from uncensored times: the i/N_bin quantiles
/// (linear interpolation between order statistics). Censored entries are
/// ignored. Throws ConfigError with fewer than N_bin distinct event times or
/// when the cutoffs are not strictly ascending.
BinSpec make_bins(std::span<const double> times, std::span<const bool> censored, std::size_t num_bins = 4);

nx::Tensor hazards_from_logits(const nx::Tensor& logits);

// S_j = prod_{s <= j} (1 - h_s). DomainError when a hazard leaves [0, 1].
nx::Tensor survival_curve(const nx::Tensor& hazards);

// Discrete-time negative log-likelihood for one sample.
nx::Tensor nll_loss(const nx::Tensor& hazards, const SurvivalTarget& target);

// r = sum_j S_j; larger means longer predicted survival.
nx::Tensor risk_score(const nx::Tensor& survival);

SurvivalOutput evaluate(const nx::Tensor& logits, const SurvivalTarget& target);

}  // namespace fluoro::survival

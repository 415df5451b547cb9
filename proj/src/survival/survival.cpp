#include "fluoro/survival/survival.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/ops.hpp"

namespace fluoro::survival {

std::size_t BinSpec::bin_of(double time) const {
    return static_cast<std::size_t>(std::lower_bound(cutoffs.begin(), cutoffs.end(), time) - cutoffs.begin());
}

void BinSpec::validate() const {
    if (cutoffs.empty()) throw ConfigError("bin spec needs at least two bins");
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        if (!std::isfinite(cutoffs[i])) throw ConfigError("bin cutoff is not finite");
        if (i && !(cutoffs[i] > cutoffs[i - 1])) throw ConfigError("bin cutoffs are not strictly ascending");
    }
}

SurvivalTarget make_target(double time, bool censored, const BinSpec& bins) {
    if (!(time >= 0.0) || !std::isfinite(time)) throw DomainError("survival time must be finite and non-negative");
    return {time, censored, bins.bin_of(time)};
}

BinSpec make_bins(std::span<const double> times, std::span<const bool> censored, std::size_t num_bins) {
    if (times.size() != censored.size()) throw DimensionError("make_bins: times and censor flags differ in length");
    if (num_bins < 2) throw ConfigError("make_bins: need at least two bins");
    std::vector<double> events;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (!censored[i]) events.push_back(times[i]);
    std::sort(events.begin(), events.end());
    const auto distinct = std::set<double>(events.begin(), events.end()).size();
    if (distinct < num_bins) {
        throw ConfigError("make_bins: " + std::to_string(distinct) + " distinct event times, need " +
                          std::to_string(num_bins));
    }
    BinSpec spec;
    const double last = static_cast<double>(events.size() - 1);
    for (std::size_t q = 1; q < num_bins; ++q) {
        const double pos = last * static_cast<double>(q) / static_cast<double>(num_bins);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, events.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        spec.cutoffs.push_back(events[lo] + frac * (events[hi] - events[lo]));
    }
    spec.validate();
    return spec;
}

nx::Tensor hazards_from_logits(const nx::Tensor& logits) {
    if (logits.rank() != 1) throw DimensionError("hazards_from_logits: expected a vector of logits");
    return nx::sigm(logits);
}

nx::Tensor survival_curve(const nx::Tensor& hazards) {
    if (hazards.rank() != 1) throw DimensionError("survival_curve: expected a vector of hazards");
    for (double h : hazards.data())
        if (!(h >= 0.0 && h <= 1.0)) throw DomainError("survival_curve: hazard " + std::to_string(h) + " outside [0,1]");
    return nx::cumprod(nx::add_scalar(nx::scale(hazards, -1.0), 1.0));
}

nx::Tensor nll_loss(const nx::Tensor& hazards, const SurvivalTarget& target) {
    if (target.bin >= hazards.numel()) {
        throw DimensionError("nll_loss: target bin " + std::to_string(target.bin) + " outside " +
                             std::to_string(hazards.numel()) + " bins");
    }
    auto s = survival_curve(hazards);
    if (target.censored) return nx::scale(nx::log_clamped(nx::index(s, target.bin), kLogFloor), -1.0);
    auto loss = nx::log_clamped(nx::index(hazards, target.bin), kLogFloor);
    if (target.bin > 0) loss = nx::add(loss, nx::log_clamped(nx::index(s, target.bin - 1), kLogFloor));
    return nx::scale(loss, -1.0);
}

nx::Tensor risk_score(const nx::Tensor& survival) { return nx::sum(survival); }

SurvivalOutput evaluate(const nx::Tensor& logits, const SurvivalTarget& target) {
    auto hazards = hazards_from_logits(logits);
    auto s = survival_curve(hazards);
    return {hazards, s, risk_score(s), nll_loss(hazards, target)};
}

}  // namespace fluoro::survival

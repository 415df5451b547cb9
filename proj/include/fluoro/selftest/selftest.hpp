#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fluoro::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct GradientCase {
    std::string name;
    double rel_error = 0.0;
    std::string worst_leaf;
};

inline constexpr double kGradientTolerance = 1e-4;

/// Finite-difference checks of every differentiable op and of the full
/// fuse -> pool -> classify -> nll composite (censored and uncensored) at
/// K=2, M=3, d_emb=8, d_hid=4, N_bin=4, in 64-bit precision.
std::vector<GradientCase> gradient_suite(std::uint64_t seed = 11);

// Library against reference oracles on random instances.
std::vector<CheckResult> oracle_suite(std::uint64_t seed = 12);

// Bag and checkpoint encode/decode round trips plus corruption handling.
std::vector<CheckResult> format_suite(std::uint64_t seed = 13, int instances = 100);

/// Runs every suite; `report` sees each result as it completes. Returns the
/// first failure, or an empty name when everything passed.
CheckResult run_all(const std::function<void(const CheckResult&)>& report = {});

}  // namespace fluoro::selftest

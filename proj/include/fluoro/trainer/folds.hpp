#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fluoro/pipeline/manifest.hpp"

namespace fluoro::trainer {

struct Fold {
    std::size_t index = 0;
    std::vector<std::string> train;  // sample ids
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Patient-level k-fold split. Patients are shuffled with `seed` and dealt
/// round-robin into k groups; fold f tests on group f, validates on group
/// (f + 1) mod k and trains on the rest. Sample ids keep manifest order.
std::vector<Fold> make_folds(std::span<const pipeline::ManifestEntry> manifest, std::size_t k, std::uint64_t seed);

// ContractError when a patient appears in more than one split of a fold or a
// sample is missing.
void check_no_leakage(const Fold& fold, std::span<const pipeline::ManifestEntry> manifest);

}  // namespace fluoro::trainer

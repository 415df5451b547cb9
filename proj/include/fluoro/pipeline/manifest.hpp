#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fluoro::pipeline {

/// One row of the cohort manifest CSV:
///   sample_id,patient_id,time_days,censored,bag_path
/// `censored` is 0 (event observed) or 1 (censored); `bag_path` is relative
/// to the manifest's directory.
struct ManifestEntry {
    std::string sample_id;
    std::string patient_id;
    double time_days = 0.0;
    bool censored = false;
    std::string bag_path;

    bool operator==(const ManifestEntry&) const = default;
};

inline constexpr const char* kManifestHeader = "sample_id,patient_id,time_days,censored,bag_path";
inline constexpr const char* kManifestName = "manifest.csv";

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace fluoro::pipeline

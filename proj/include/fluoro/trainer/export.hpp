#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fluoro/metrics/metrics.hpp"
#include "fluoro/trainer/dataset.hpp"
#include "fluoro/trainer/model.hpp"

namespace fluoro::trainer {

struct SlideExport {
    std::string sample_id;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> patch_attention;  // per patch, bag order
    std::optional<double> morans_i;       // empty when undefined for the grid
    std::vector<int> argmax_marker;       // per patch; empty for channel-mean models
};

struct InterpretabilityReport {
    std::vector<SlideExport> slides;
    std::vector<std::string> channel_names;
    std::optional<metrics::MarkerAttentionSummary> marker_attention;
};

/// Runs the model over every bag and, when `out` is non-empty, writes
///   attention/<id>.csv, attention/<id>.png   patch attention on the grid
///   argmax/<id>.csv, argmax/<id>.png         dominant marker per patch
///   marker_attention.csv                     z-scored cohort M x M average
///   morans_i.csv                             per-slide Moran's I
/// An empty bag list yields an empty report and no files.
InterpretabilityReport export_interpretability(const Model& model, const std::vector<const Sample*>& samples,
                                               const std::filesystem::path& out, nx::Precision precision,
                                               double top_fraction = 0.10);

}  // namespace fluoro::trainer

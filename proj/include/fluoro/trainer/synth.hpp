#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fluoro/fusion/fusion.hpp"
#include "fluoro/pipeline/manifest.hpp"

namespace fluoro::trainer {

enum class SignalMode {
    linear,       // risk is a linear functional of the signal channel's patch mean
    interaction,  // risk lives in the product of two channels; their sum carries none
    smooth,       // linear signal shaped as a smooth bump over smoothly varying tissue
};

std::string to_string(SignalMode m);
SignalMode signal_mode_from_string(std::string_view s);

struct SynthConfig {
    std::size_t num_samples = 200;
    std::size_t num_markers = 7;
    std::size_t embed_dim = 64;
    std::size_t grid_rows = 4;
    std::size_t grid_cols = 4;
    double censor_rate = 0.3;
    double signal_weight = 1.5;  // log-hazard per unit of standardised risk
    double signal_amplitude = 2.0;
    double noise = 0.5;
    double tissue_amplitude = 2.0;  // smooth mode only
    double repeat_fraction = 0.1;  // share of patients contributing two slides
    double base_time_days = 1000.0;
    SignalMode mode = SignalMode::linear;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthCohort {
    std::vector<pipeline::ManifestEntry> manifest;
    std::vector<fusion::EmbeddedBag> bags;
    std::vector<double> true_risks;  // higher = shorter expected survival
};

/// Planted-signal cohort. Each patch embeds every marker as a per-marker
/// signature plus Gaussian noise; the signal channel(s) add a multiple of a
/// hidden unit direction. The true risk is the standardised hidden functional
/// and survival times are exponential with rate exp(signal_weight * risk) /
/// base_time_days. A censor_rate share of samples is censored at a uniform
/// fraction of their event time. Slides of one patient share the outcome.
SynthCohort synth_cohort(const SynthConfig& config);

// C-index of the true risks (score = -risk).
double oracle_c_index(const SynthCohort& cohort);

// bags/<id>.flbg, manifest.csv and true_risks.csv under `dir`.
void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort);

}  // namespace fluoro::trainer

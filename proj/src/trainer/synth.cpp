#include "fluoro/trainer/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>

#include "fluoro/errors.hpp"
#include "fluoro/metrics/metrics.hpp"
#include "fluoro/pipeline/bag_io.hpp"

namespace fluoro::trainer {

std::string to_string(SignalMode m) {
    switch (m) {
        case SignalMode::linear: return "linear";
        case SignalMode::interaction: return "interaction";
        case SignalMode::smooth: return "smooth";
    }
    return "?";
}

SignalMode signal_mode_from_string(std::string_view s) {
    if (s == "linear") return SignalMode::linear;
    if (s == "interaction") return SignalMode::interaction;
    if (s == "smooth") return SignalMode::smooth;
    throw ConfigError("unknown signal mode '" + std::string(s) + "' (linear, interaction, smooth)");
}

void SynthConfig::validate() const {
    if (num_samples < 20) throw ConfigError("synthetic cohort needs at least 20 samples");
    if (num_markers < 1 || embed_dim < 1) throw ConfigError("markers and embedding width must be positive");
    if (mode == SignalMode::interaction && num_markers < 2) throw ConfigError("interaction mode needs two markers");
    if (grid_rows * grid_cols < 1) throw ConfigError("empty patch grid");
    if (!(censor_rate >= 0.0 && censor_rate < 1.0)) throw ConfigError("censor_rate must lie in [0, 1)");
    if (!(repeat_fraction >= 0.0 && repeat_fraction <= 0.5)) throw ConfigError("repeat_fraction must lie in [0, 0.5]");
    if (!(base_time_days > 0.0) || !(noise >= 0.0) || !std::isfinite(signal_weight)) {
        throw ConfigError("invalid synthetic scale parameters");
    }
}

namespace {

std::vector<std::string> marker_names(std::size_t m) {
    static const char* panel[] = {"CD8", "FOXP3", "PD-1", "PD-L1", "CK", "DAPI", "AF"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(m == 7 ? panel[i] : "ch" + std::to_string(i));
    return out;
}

std::vector<double> unit_vector(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& x : v) {
        x = n01(rng);
        norm += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm);
    return v;
}

// Unit-variance field on the grid: i.i.d. normals smoothed by two passes of a
// 3x3 box filter.
std::vector<double> smooth_field(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    std::vector<double> f(rows * cols);
    for (auto& x : f) x = n01(rng);
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> g(f.size(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                double acc = 0.0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
                        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) ||
                            cc >= static_cast<std::ptrdiff_t>(cols)) {
                            continue;
                        }
                        acc += f[static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc)];
                        ++n;
                    }
                }
                g[r * cols + c] = acc / n;
            }
        }
        f = std::move(g);
    }
    double mean = 0.0, var = 0.0;
    for (double x : f) mean += x / static_cast<double>(f.size());
    for (double x : f) var += (x - mean) * (x - mean) / static_cast<double>(f.size());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (auto& x : f) x = (x - mean) / sd;
    return f;
}

}  // namespace

SynthCohort synth_cohort(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t M = cfg.num_markers, D = cfg.embed_dim, K = cfg.grid_rows * cfg.grid_cols;

    std::vector<std::vector<double>> signature(M, std::vector<double>(D));
    for (auto& s : signature) {
        for (auto& x : s) x = 0.5 * n01(rng);
    }
    const auto direction = unit_vector(D, rng);
    std::vector<std::vector<double>> tissue_axis;
    for (std::size_t m = 0; m < M; ++m) tissue_axis.push_back(unit_vector(D, rng));
    const auto names = marker_names(M);

    // Patients: a repeat_fraction share contributes a second slide.
    std::vector<std::size_t> patient_of(cfg.num_samples);
    std::size_t patients = 0;
    bool previous_repeated = false;
    for (std::size_t i = 0; i < cfg.num_samples; ++i) {
        const bool repeat = i > 0 && !previous_repeated && u01(rng) < cfg.repeat_fraction;
        patient_of[i] = repeat ? patient_of[i - 1] : patients++;
        previous_repeated = repeat;
    }
    std::vector<double> latent(patients);
    for (auto& z : latent) z = cfg.mode == SignalMode::interaction ? 1.5 * u01(rng) : n01(rng);

    SynthCohort cohort;
    std::vector<double> functional(cfg.num_samples);
    for (std::size_t i = 0; i < cfg.num_samples; ++i) {
        fusion::EmbeddedBag bag;
        char id[32];
        std::snprintf(id, sizeof id, "S%04zu", i);
        bag.sample_id = id;
        bag.num_patches = K;
        bag.num_markers = M;
        bag.embed_dim = D;
        bag.channel_names = names;
        bag.embeddings.resize(K * M * D);
        const double z = latent[patient_of[i]];
        // Smooth mode: a Gaussian bump centred at a random cell.
        const double cr = u01(rng) * static_cast<double>(cfg.grid_rows - 1);
        const double cc = u01(rng) * static_cast<double>(cfg.grid_cols - 1);
        const double width = 0.3 * static_cast<double>(std::max(cfg.grid_rows, cfg.grid_cols));
        // Smooth mode: each marker also varies along its own axis with a
        // spatially correlated tissue field.
        std::vector<std::vector<double>> tissue;
        if (cfg.mode == SignalMode::smooth) {
            for (std::size_t m = 0; m < M; ++m) tissue.push_back(smooth_field(cfg.grid_rows, cfg.grid_cols, rng));
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const auto r = k / cfg.grid_cols, c = k % cfg.grid_cols;
            bag.coords.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
            std::vector<double> amp(M, 0.0);
            switch (cfg.mode) {
                case SignalMode::linear: {
                    amp[0] = z + 0.5 * n01(rng);
                    acc += amp[0];
                    break;
                }
                case SignalMode::interaction: {
                    const double s = n01(rng);
                    const double d = (u01(rng) < 0.5 ? -z : z);
                    amp[0] = s + d;
                    amp[1] = s - d;
                    acc -= amp[0] * amp[1];
                    break;
                }
                case SignalMode::smooth: {
                    const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(c) - cc;
                    const double bump = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
                    amp[0] = 2.0 * z * bump;
                    acc += amp[0];
                    break;
                }
            }
            for (std::size_t m = 0; m < M; ++m) {
                float* out = bag.embeddings.data() + (k * M + m) * D;
                for (std::size_t j = 0; j < D; ++j) {
                    double v = signature[m][j] + cfg.noise * n01(rng) + cfg.signal_amplitude * amp[m] * direction[j];
                    if (!tissue.empty()) v += cfg.tissue_amplitude * tissue[m][k] * tissue_axis[m][j];
                    out[j] = static_cast<float>(v);
                }
            }
        }
        functional[i] = acc / static_cast<double>(K);
        cohort.bags.push_back(std::move(bag));
    }

    const double mean = std::accumulate(functional.begin(), functional.end(), 0.0) / static_cast<double>(cfg.num_samples);
    double var = 0.0;
    for (double f : functional) var += (f - mean) * (f - mean);
    const double sd = std::sqrt(var / static_cast<double>(cfg.num_samples));
    cohort.true_risks.resize(cfg.num_samples);
    for (std::size_t i = 0; i < cfg.num_samples; ++i) cohort.true_risks[i] = sd > 0.0 ? (functional[i] - mean) / sd : 0.0;

    // Outcomes are drawn per patient from the mean risk of their slides.
    std::vector<double> patient_risk(patients, 0.0), patient_count(patients, 0.0);
    for (std::size_t i = 0; i < cfg.num_samples; ++i) {
        patient_risk[patient_of[i]] += cohort.true_risks[i];
        patient_count[patient_of[i]] += 1.0;
    }
    std::vector<double> time(patients);
    std::vector<bool> censored(patients);
    for (std::size_t p = 0; p < patients; ++p) {
        const double rate = std::exp(cfg.signal_weight * patient_risk[p] / patient_count[p]) / cfg.base_time_days;
        const double t = std::exponential_distribution<double>(rate)(rng);
        censored[p] = u01(rng) < cfg.censor_rate;
        time[p] = censored[p] ? t * std::max(u01(rng), 1e-6) : t;
    }
    for (std::size_t i = 0; i < cfg.num_samples; ++i) {
        const auto p = patient_of[i];
        char pid[32];
        std::snprintf(pid, sizeof pid, "P%04zu", p);
        cohort.manifest.push_back({cohort.bags[i].sample_id, pid, time[p], censored[p],
                                   "bags/" + cohort.bags[i].sample_id + ".flbg"});
    }
    return cohort;
}

double oracle_c_index(const SynthCohort& cohort) {
    const auto n = cohort.manifest.size();
    std::vector<double> scores(n), times(n);
    auto flags = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = -cohort.true_risks[i];
        times[i] = cohort.manifest[i].time_days;
        flags[i] = cohort.manifest[i].censored;
    }
    return metrics::c_index(scores, times, std::span<const bool>(flags.get(), n));
}

void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort) {
    for (std::size_t i = 0; i < cohort.bags.size(); ++i) {
        pipeline::write_bag(dir / cohort.manifest[i].bag_path, cohort.bags[i]);
    }
    pipeline::write_manifest(dir / pipeline::kManifestName, cohort.manifest);
    std::ofstream out(dir / "true_risks.csv");
    if (!out) throw IoError("cannot write " + (dir / "true_risks.csv").string());
    out << "sample_id,patient_id,true_risk\n";
    char buf[64];
    for (std::size_t i = 0; i < cohort.manifest.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", cohort.true_risks[i]);
        out << cohort.manifest[i].sample_id << ',' << cohort.manifest[i].patient_id << ',' << buf << '\n';
    }
}

}  // namespace fluoro::trainer

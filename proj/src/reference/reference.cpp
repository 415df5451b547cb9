#include "fluoro/reference/reference.hpp"

#include <algorithm>
#include <cmath>

namespace fluoro::reference {

std::pair<double, std::size_t> brute_concordance(std::span<const double> scores, std::span<const double> times,
                                                 std::span<const bool> censored) {
    double concordant = 0.0;
    std::size_t comparable = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (censored[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!(times[i] < times[j])) continue;
            ++comparable;
            if (scores[i] < scores[j]) {
                concordant += 1.0;
            } else if (scores[i] == scores[j]) {
                concordant += 0.5;
            }
        }
    }
    return {concordant, comparable};
}

double double_loop_morans_i(const metrics::HeatmapGrid& grid) {
    struct Cell {
        long r, c;
        double x;
    };
    std::vector<Cell> cells;
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            if (grid.inside(r, c)) cells.push_back({static_cast<long>(r), static_cast<long>(c), grid.at(r, c)});
        }
    }
    const auto n = cells.size();
    double mean = 0.0;
    for (const auto& cell : cells) mean += cell.x;
    mean /= static_cast<double>(n);
    double num = 0.0, den = 0.0, w_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        den += (cells[i].x - mean) * (cells[i].x - mean);
        for (std::size_t j = 0; j < n; ++j) {
            const long dist = std::labs(cells[i].r - cells[j].r) + std::labs(cells[i].c - cells[j].c);
            const double w = dist == 1 ? 1.0 : 0.0;
            w_sum += w;
            num += w * (cells[i].x - mean) * (cells[j].x - mean);
        }
    }
    return static_cast<double>(n) / w_sum * num / den;
}

int exhaustive_otsu(const pipeline::Histogram& h) {
    __extension__ typedef __int128 i128;
    int occupied = 0;
    for (auto c : h) occupied += c > 0;
    if (occupied < 2) return -1;
    // sigma_B^2 = w0 w1 (mu0 - mu1)^2 = (n0 S1 - n1 S0)^2 / (n^2 n0 n1); compare
    // a^2 / b across thresholds by cross-multiplication.
    int best_t = -1;
    i128 best_num = 0, best_den = 1;
    for (int t = 0; t < 255; ++t) {
        i128 n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (int i = 0; i < 256; ++i) {
            if (i <= t) {
                n0 += h[i];
                s0 += static_cast<i128>(h[i]) * i;
            } else {
                n1 += h[i];
                s1 += static_cast<i128>(h[i]) * i;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const i128 diff = n0 * s1 - n1 * s0;
        const i128 num = diff * diff;
        const i128 den = n0 * n1;
        if (best_t < 0 || num * best_den > best_num * den) {
            best_t = t;
            best_num = num;
            best_den = den;
        }
    }
    return best_t;
}

std::vector<double> survival_curve(std::span<const double> hazards) {
    std::vector<double> s;
    double running = 1.0;
    for (double h : hazards) {
        running *= 1.0 - h;
        s.push_back(running);
    }
    return s;
}

double nll(std::span<const double> hazards, std::size_t bin, bool censored) {
    const auto s = survival_curve(hazards);
    auto lg = [](double x) { return std::log(std::max(x, 1e-12)); };
    if (censored) return -lg(s[bin]);
    return -(lg(hazards[bin]) + (bin > 0 ? lg(s[bin - 1]) : 0.0));
}

double risk(std::span<const double> hazards) {
    double r = 0.0;
    for (double s : survival_curve(hazards)) r += s;
    return r;
}

double percentile(std::vector<double> x, double q) {
    std::sort(x.begin(), x.end());
    const double pos = q / 100.0 * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= x.size()) return x.back();
    return x[lo] + (pos - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

void adamw(std::vector<double>& p, const std::vector<double>& g, AdamWState& s, double lr, double b1, double b2,
           double eps, double wd) {
    if (s.m.empty()) {
        s.m.assign(p.size(), 0.0);
        s.v.assign(p.size(), 0.0);
    }
    s.t += 1;
    const double c1 = 1.0 - std::pow(b1, s.t);
    const double c2 = 1.0 - std::pow(b2, s.t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = p[i] - lr * wd * p[i];
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
        p[i] = p[i] - lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
    }
}

namespace {

struct Dense {
    std::vector<double> w, b;
    std::size_t in = 0, out = 0;

    explicit Dense(const nx::Linear& l)
        : w(l.weight.data().begin(), l.weight.data().end()), in(l.in_features()), out(l.out_features()) {
        if (l.use_bias) b.assign(l.bias.data().begin(), l.bias.data().end());
    }

    std::vector<double> operator()(const double* x) const {
        std::vector<double> y(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b.empty() ? 0.0 : b[o];
            for (std::size_t i = 0; i < in; ++i) acc += x[i] * w[i * out + o];
            y[o] = acc;
        }
        return y;
    }
};

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> layer_norm(const std::vector<double>& x, std::span<const double> g, std::span<const double> b,
                               double eps) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / static_cast<double>(x.size()));
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / (sd + eps) * g[i] + b[i];
    return y;
}

}  // namespace

FusionResult fuse(std::span<const double> H, std::size_t K, std::size_t M, const fusion::FusionParams& p) {
    const auto E = p.config.embed_dim, D = p.config.hidden_dim;
    const Dense down(p.bottleneck), wq(p.query), wk(p.key), wv(p.value), up(p.inverse_bottleneck);
    FusionResult out{std::vector<double>(K * E, 0.0), std::vector<double>(K * M * M, 0.0)};
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::vector<double>> h(M), q(M), key(M), v(M);
        for (std::size_t m = 0; m < M; ++m) {
            h[m] = down(&H[(k * M + m) * E]);
            for (auto& x : h[m]) x = gelu(x);
            q[m] = wq(h[m].data());
            key[m] = wk(h[m].data());
            v[m] = wv(h[m].data());
        }
        for (std::size_t i = 0; i < M; ++i) {
            std::vector<double> s(M);
            double peak = -INFINITY;
            for (std::size_t j = 0; j < M; ++j) {
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) dot += q[i][d] * key[j][d];
                s[j] = dot / std::sqrt(static_cast<double>(D));
                peak = std::max(peak, s[j]);
            }
            double z = 0.0;
            for (auto& x : s) z += (x = std::exp(x - peak));
            std::vector<double> mixed(D, 0.0);
            for (std::size_t j = 0; j < M; ++j) {
                const double a = s[j] / z;
                out.attention[(k * M + i) * M + j] = a;
                for (std::size_t d = 0; d < D; ++d) mixed[d] += a * v[j][d];
            }
            for (std::size_t d = 0; d < D; ++d) mixed[d] += h[i][d];
            auto normed = layer_norm(mixed, p.sdpa_gamma.data(), p.sdpa_beta.data(), p.config.eps);
            auto expanded = up(normed.data());
            for (std::size_t e = 0; e < E; ++e) expanded[e] = gelu(expanded[e]) + H[(k * M + i) * E + e];
            auto restored = layer_norm(expanded, p.bottleneck_gamma.data(), p.bottleneck_beta.data(), p.config.eps);
            for (std::size_t e = 0; e < E; ++e) out.fused[k * E + e] += restored[e] / static_cast<double>(M);
        }
    }
    return out;
}

PoolResult pool(std::span<const double> fused, std::size_t K, const pooling::GatedAttentionParams& ap,
                const pooling::ClassifierParams& cp) {
    const Dense V(ap.V), U(ap.U), w(ap.w), head(cp.head);
    const auto E = V.in;
    PoolResult out;
    std::vector<double> score(K);
    double peak = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
        auto a = V(&fused[k * E]);
        auto b = U(&fused[k * E]);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i]) * (1.0 / (1.0 + std::exp(-b[i])));
        score[k] = w(a.data())[0];
        peak = std::max(peak, score[k]);
    }
    double z = 0.0;
    for (auto& s : score) z += (s = std::exp(s - peak));
    out.bag.assign(E, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        out.attention.push_back(score[k] / z);
        for (std::size_t e = 0; e < E; ++e) out.bag[e] += out.attention[k] * fused[k * E + e];
    }
    out.logits = head(out.bag.data());
    return out;
}

}  // namespace fluoro::reference

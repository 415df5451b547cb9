#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/precision.hpp"

namespace fluoro::trainer {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update, in place:
///   p -= lr * wd * p
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Throws NumericError on a non-finite gradient.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& config, nx::Precision precision = nx::Precision::f64);

/// AdamW over a set of named leaf tensors.
class AdamW {
public:
    AdamW(std::vector<nx::NamedTensor> params, AdamWConfig config, nx::Precision precision);

    void step();
    void zero_grad();
    std::size_t steps() const { return states_.empty() ? 0 : states_.front().step; }

private:
    std::vector<nx::NamedTensor> params_;
    std::vector<AdamWState> states_;
    AdamWConfig config_;
    nx::Precision precision_;
};

}  // namespace fluoro::trainer

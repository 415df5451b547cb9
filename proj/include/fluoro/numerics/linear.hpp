#pragma once

#include <random>
#include <string>
#include <vector>

#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/tensor.hpp"

namespace fluoro::nx {

// y = x W + b with W stored [in x out].
struct Linear {
    Tensor weight;
    Tensor bias;
    bool use_bias = true;

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    // Weights and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
    static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng, bool use_bias = true);

    void append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// x: [rows x in] -> [rows x out]
Tensor linear(const Tensor& x, const Linear& layer);

}  // namespace fluoro::nx

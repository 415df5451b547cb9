#pragma once

#include <utility>

#include "fluoro/numerics/tensor.hpp"

namespace fluoro::nx {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);         // [B,m,k] x [B,k,n]
Tensor transpose(const Tensor& a);                    // swaps the last two axes
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over the last axis
Tensor tanh(const Tensor& x);
Tensor sigm(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact x * Phi(x)
Tensor log_clamped(const Tensor& x, double floor);

// Reductions and normalizers.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor cumprod(const Tensor& x);  // rank-1
Tensor index(const Tensor& x, std::size_t flat);

struct NormStats {
    Tensor mean;
    Tensor std;
};

// Per-slice mean and biased standard deviation along `axis`; `eps` is added
// after the square root. Values only, no tape.
NormStats norm_stats(const Tensor& x, std::size_t axis, double eps);

// (x - mean) / (std + eps) * gamma + beta over the last axis.
Tensor normalize_last(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Scalar helpers shared with the reference implementations in tests.
double gelu_value(double x) noexcept;
double sigmoid_value(double x) noexcept;

}  // namespace fluoro::nx

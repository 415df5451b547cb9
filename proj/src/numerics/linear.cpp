#include "fluoro/numerics/linear.hpp"

#include <cmath>

#include "fluoro/numerics/ops.hpp"
#include "fluoro/numerics/precision.hpp"

namespace fluoro::nx {

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng, bool use_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const auto p = precision();
    std::vector<double> w(in * out), b(out, 0.0);
    for (auto& v : w) v = round_to_precision(dist(rng), p);
    if (use_bias)
        for (auto& v : b) v = round_to_precision(dist(rng), p);
    return Linear{Tensor::from({in, out}, std::move(w), true), Tensor::from({out}, std::move(b), use_bias), use_bias};
}

void Linear::append_parameters(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (use_bias) out.push_back({prefix + ".bias", bias});
}

Tensor linear(const Tensor& x, const Linear& layer) {
    auto y = matmul(x, layer.weight);
    return layer.use_bias ? add_bias(y, layer.bias) : y;
}

}  // namespace fluoro::nx

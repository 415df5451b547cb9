#include "fluoro/trainer/adamw.hpp"

#include <cmath>

#include "fluoro/errors.hpp"

namespace fluoro::trainer {

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& config, nx::Precision precision) {
    if (params.size() != grads.size()) throw DimensionError("adamw: parameter/gradient size mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double p = params[i];
        p -= config.lr * config.weight_decay * p;
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        p -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        params[i] = nx::round_to_precision(p, precision);
    }
}

AdamW::AdamW(std::vector<nx::NamedTensor> params, AdamWConfig config, nx::Precision precision)
    : params_(std::move(params)), states_(params_.size()), config_(config), precision_(precision) {
    for (const auto& p : params_)
        if (!p.tensor.is_leaf()) throw ContractError("adamw: parameter '" + p.name + "' is not a leaf");
}

void AdamW::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_[i].tensor;
        const auto g = t.grad();
        try {
            adamw_step(t.mutable_data(), g, states_[i], config_, precision_);
        } catch (const NumericError& e) {
            throw NumericError("parameter '" + params_[i].name + "': " + e.what());
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace fluoro::trainer

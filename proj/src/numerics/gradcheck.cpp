#include "fluoro/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/precision.hpp"

namespace fluoro::nx {

double GradCheckReport::worst_rel_error() const {
    const auto* w = worst();
    return w ? w->rel_error : 0.0;
}

const GradCheckEntry* GradCheckReport::worst() const {
    const GradCheckEntry* out = nullptr;
    for (const auto& e : entries)
        if (!out || e.rel_error > out->rel_error) out = &e;
    return out;
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& leaves,
                                GradCheckOptions options) {
    PrecisionScope exact(Precision::f64);
    for (const auto& leaf : leaves) {
        if (!leaf.tensor.is_leaf() || !leaf.tensor.requires_grad()) {
            throw ContractError("check_gradients: '" + leaf.name + "' is not a leaf requiring a gradient");
        }
        leaf.tensor.node()->grad.clear();
    }
    backward(loss_fn());

    GradCheckReport report;
    for (const auto& leaf : leaves) {
        const auto analytic = leaf.tensor.grad();
        auto values = Tensor(leaf.tensor.node()).mutable_data();
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const double up = loss_fn().item();
            values[i] = saved - options.step;
            const double down = loss_fn().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double d = analytic[i] - numeric;
            diff2 += d * d;
            a2 += analytic[i] * analytic[i];
            n2 += numeric * numeric;
            max_abs = std::max(max_abs, std::abs(d));
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), options.norm_floor});
        report.entries.push_back({leaf.name, std::sqrt(diff2) / denom, max_abs});
    }
    return report;
}

}  // namespace fluoro::nx

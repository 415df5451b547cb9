#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fluoro/numerics/tensor.hpp"

namespace fluoro::nx {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct GradCheckEntry {
    std::string name;
    double rel_error = 0.0;
    double abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst_rel_error() const;
    const GradCheckEntry* worst() const;
};

struct GradCheckOptions {
    double step = 1e-5;
    // Gradient norms below this are compared on an absolute scale.
    double norm_floor = 1e-5;
};

/// Compares analytic gradients of `loss_fn` against central finite
/// differences for every listed leaf. The relative error of a tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, norm_floor).
/// Runs under 64-bit precision regardless of the caller's setting.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<NamedTensor>& leaves,
                                GradCheckOptions options = {});

}  // namespace fluoro::nx

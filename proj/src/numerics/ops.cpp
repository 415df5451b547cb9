#include "fluoro/numerics/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fluoro/errors.hpp"
#include "fluoro/fault.hpp"
#include "fluoro/numerics/precision.hpp"

namespace fluoro::nx {

using detail::Node;

namespace {

using Backward = std::function<void(Node&)>;

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, Backward backward) {
    const auto p = precision();
    for (auto& v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
        v = round_to_precision(v, p);
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    if (grad_enabled())
        for (const auto* in : inputs) node->requires_grad = node->requires_grad || in->requires_grad();
    if (node->requires_grad) {
        for (const auto* in : inputs) node->inputs.push_back(in->node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

// Gradient sink for input `i`, or nullptr when that input needs none.
std::vector<double>* sink(Node& self, std::size_t i) {
    auto& in = *self.inputs[i];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
    }
}

struct AxisLayout {
    std::size_t outer = 1, length = 1, inner = 1;
    std::size_t at(std::size_t o, std::size_t i, std::size_t j) const { return (o * length + i) * inner + j; }
};

AxisLayout layout(const char* op, const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                             shape_string(shape));
    }
    AxisLayout l;
    for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
    l.length = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
    return l;
}

// C[m,n] += A[m,k] * B[k,n] with optional transposes, row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
              bool trans_a, bool trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F f, D derivative) {
    std::vector<double> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(op, x.shape(), std::move(out), {&x}, [derivative](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) (*g)[i] += self.grad[i] * derivative(xv[i], self.value[i]);
    });
}

}  // namespace

double sigmoid_value(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double gelu_value(double x) noexcept { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n, false, false);
    return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* ga = sink(self, 0)) gemm_acc(self.grad.data(), bv.data(), ga->data(), m, n, k, false, true);
        if (auto* gb = sink(self, 1)) gemm_acc(av.data(), self.grad.data(), gb->data(), k, m, n, true, false);
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    require_rank("bmm", a, 3);
    require_rank("bmm", b, 3);
    const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
        throw DimensionError("bmm: incompatible " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t s = 0; s < batch; ++s) {
        gemm_acc(a.data().data() + s * m * k, b.data().data() + s * k * n, out.data() + s * m * n, m, k, n,
                 false, false);
    }
    return make_result("bmm", {batch, m, n}, std::move(out), {&a, &b}, [batch, m, k, n](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        auto* ga = sink(self, 0);
        auto* gb = sink(self, 1);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* g = self.grad.data() + s * m * n;
            if (ga) gemm_acc(g, bv.data() + s * k * n, ga->data() + s * m * k, m, n, k, false, true);
            if (gb) gemm_acc(av.data() + s * m * k, g, gb->data() + s * k * n, k, m, n, true, false);
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw DimensionError("transpose: rank < 2 for " + shape_string(a.shape()));
    Shape shape = a.shape();
    const auto rows = shape[shape.size() - 2], cols = shape[shape.size() - 1];
    std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
    const auto batch = a.numel() / std::max<std::size_t>(rows * cols, 1);
    const auto in = a.data();
    std::vector<double> out(a.numel());
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out[s * rows * cols + j * rows + i] = in[s * rows * cols + i * cols + j];
    return make_result("transpose", std::move(shape), std::move(out), {&a}, [batch, rows, cols](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    (*g)[s * rows * cols + i * cols + j] += self.grad[s * rows * cols + j * rows + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {&a}, [](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        for (std::size_t s = 0; s < 2; ++s)
            if (auto* g = sink(self, s))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return make_result("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        if (auto* g = sink(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = sink(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape("hadamard", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_result("hadamard", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* g = sink(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (auto* g = sink(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank("add_bias", bias, 1);
    if (x.rank() == 0 || x.shape().back() != bias.dim(0)) {
        throw DimensionError("add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
    }
    const auto n = bias.dim(0);
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + bias.data()[i % n];
    return make_result("add_bias", x.shape(), std::move(out), {&x, &bias}, [n](Node& self) {
        if (auto* g = sink(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = sink(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    });
}

Tensor tanh(const Tensor& x) {
    return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigm(const Tensor& x) {
    return unary("sigm", x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
    const bool faulty = fault::active() == fault::Fault::gelu_backward;
    return unary("gelu", x, gelu_value, [faulty](double v, double) {
        const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        const double d = cdf + v * pdf;
        return faulty ? 1.01 * d : d;
    });
}

Tensor log_clamped(const Tensor& x, double floor) {
    return unary(
        "log_clamped", x, [floor](double v) { return std::log(std::max(v, floor)); },
        [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto l = layout("softmax", x.shape(), axis);
    if (l.length == 0) throw DimensionError("softmax: empty axis in " + shape_string(x.shape()));
    const auto in = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t j = 0; j < l.inner; ++j) {
            double peak = in[l.at(o, 0, j)];
            for (std::size_t i = 1; i < l.length; ++i) peak = std::max(peak, in[l.at(o, i, j)]);
            double total = 0.0;
            for (std::size_t i = 0; i < l.length; ++i) {
                const double e = std::exp(in[l.at(o, i, j)] - peak);
                out[l.at(o, i, j)] = e;
                total += e;
            }
            for (std::size_t i = 0; i < l.length; ++i) out[l.at(o, i, j)] /= total;
        }
    }
    return make_result("softmax", x.shape(), std::move(out), {&x}, [l](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        const auto& y = self.value;
        for (std::size_t o = 0; o < l.outer; ++o) {
            for (std::size_t j = 0; j < l.inner; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < l.length; ++i) dot += self.grad[l.at(o, i, j)] * y[l.at(o, i, j)];
                for (std::size_t i = 0; i < l.length; ++i) {
                    const auto at = l.at(o, i, j);
                    (*g)[at] += y[at] * (self.grad[at] - dot);
                }
            }
        }
    });
}

Tensor mean(const Tensor& x, std::size_t axis) {
    const auto l = layout("mean", x.shape(), axis);
    if (l.length == 0) throw DimensionError("mean: empty axis in " + shape_string(x.shape()));
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    const auto in = x.data();
    std::vector<double> out(l.outer * l.inner, 0.0);
    for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < l.length; ++i)
            for (std::size_t j = 0; j < l.inner; ++j) out[o * l.inner + j] += in[l.at(o, i, j)];
    const double inv = 1.0 / static_cast<double>(l.length);
    for (auto& v : out) v *= inv;
    return make_result("mean", std::move(shape), std::move(out), {&x}, [l, inv](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        for (std::size_t o = 0; o < l.outer; ++o)
            for (std::size_t i = 0; i < l.length; ++i)
                for (std::size_t j = 0; j < l.inner; ++j) (*g)[l.at(o, i, j)] += inv * self.grad[o * l.inner + j];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_result("sum", {}, {total}, {&x}, [](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        for (auto& v : *g) v += self.grad[0];
    });
}

Tensor cumprod(const Tensor& x) {
    require_rank("cumprod", x, 1);
    const auto n = x.numel();
    std::vector<double> out(n);
    double running = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        running *= x.data()[i];
        out[i] = running;
    }
    return make_result("cumprod", x.shape(), std::move(out), {&x}, [n](Node& self) {
        auto* g = sink(self, 0);
        if (!g) return;
        // dS_j/dx_i is the product of x_s for s <= j, s != i; no division, so
        // zero factors are handled exactly.
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < n; ++i) {
            double prefix = 1.0;
            for (std::size_t s = 0; s < i; ++s) prefix *= xv[s];
            double partial = prefix;
            for (std::size_t j = i; j < n; ++j) {
                if (j > i) partial *= xv[j];
                (*g)[i] += self.grad[j] * partial;
            }
        }
    });
}

Tensor index(const Tensor& x, std::size_t flat) {
    if (flat >= x.numel()) {
        throw DimensionError("index " + std::to_string(flat) + " out of range for " + shape_string(x.shape()));
    }
    return make_result("index", {}, {x.data()[flat]}, {&x}, [flat](Node& self) {
        if (auto* g = sink(self, 0)) (*g)[flat] += self.grad[0];
    });
}

NormStats norm_stats(const Tensor& x, std::size_t axis, double eps) {
    const auto l = layout("norm_stats", x.shape(), axis);
    if (l.length == 0) throw DimensionError("norm_stats: empty axis in " + shape_string(x.shape()));
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    const auto in = x.data();
    std::vector<double> mu(l.outer * l.inner, 0.0), sd(l.outer * l.inner, 0.0);
    const double n = static_cast<double>(l.length);
    for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t j = 0; j < l.inner; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < l.length; ++i) s += in[l.at(o, i, j)];
            const double m = s / n;
            double ss = 0.0;
            for (std::size_t i = 0; i < l.length; ++i) {
                const double d = in[l.at(o, i, j)] - m;
                ss += d * d;
            }
            mu[o * l.inner + j] = m;
            sd[o * l.inner + j] = std::sqrt(ss / n) + eps;
        }
    }
    return {Tensor::from(shape, std::move(mu)), Tensor::from(shape, std::move(sd))};
}

Tensor normalize_last(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() == 0) throw DimensionError("normalize_last: scalar input");
    const auto d = x.shape().back();
    require_rank("normalize_last", gamma, 1);
    require_rank("normalize_last", beta, 1);
    if (gamma.dim(0) != d || beta.dim(0) != d) {
        throw DimensionError("normalize_last: affine length " + shape_string(gamma.shape()) + "/" +
                             shape_string(beta.shape()) + " vs feature dim " + std::to_string(d));
    }
    const auto rows = x.numel() / d;
    const auto in = x.data();
    const auto gv = gamma.data();
    const auto bv = beta.data();
    // Per-row (root variance, sigma) are recomputed in backward from inputs.
    std::vector<double> out(x.numel());
    const double n = static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in.data() + r * d;
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += row[i];
        const double mu = s / n;
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i) ss += (row[i] - mu) * (row[i] - mu);
        const double sigma = std::sqrt(ss / n) + eps;
        for (std::size_t i = 0; i < d; ++i) out[r * d + i] = (row[i] - mu) / sigma * gv[i] + bv[i];
    }
    return make_result("normalize_last", x.shape(), std::move(out), {&x, &gamma, &beta}, [rows, d, eps, n](Node& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& gv = self.inputs[1]->value;
        auto* gx = sink(self, 0);
        auto* gg = sink(self, 1);
        auto* gb = sink(self, 2);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = xv.data() + r * d;
            const double* dy = self.grad.data() + r * d;
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += row[i];
            const double mu = s / n;
            double ss = 0.0;
            for (std::size_t i = 0; i < d; ++i) ss += (row[i] - mu) * (row[i] - mu);
            const double root = std::sqrt(ss / n);
            const double sigma = root + eps;
            double mean_dxhat = 0.0, dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                xhat[i] = (row[i] - mu) / sigma;
                dxhat[i] = dy[i] * gv[i];
                mean_dxhat += dxhat[i];
                dot += dxhat[i] * (row[i] - mu);
                if (gg) (*gg)[i] += dy[i] * xhat[i];
                if (gb) (*gb)[i] += dy[i];
            }
            if (!gx) continue;
            mean_dxhat /= n;
            // d sigma / d x_j = (x_j - mu) / (n * root); zero for constant rows.
            const double coupling = root > 0.0 ? dot / (sigma * sigma * n * root) : 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                (*gx)[r * d + j] += (dxhat[j] - mean_dxhat) / sigma - coupling * (row[j] - mu);
            }
        }
    });
}

}  // namespace fluoro::nx

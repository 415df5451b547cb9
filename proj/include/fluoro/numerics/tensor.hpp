#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fluoro::nx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient is first accumulated
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional reverse-mode tape.
///
/// Copies share the underlying node; use `clone()` for an independent value.
/// Tensors produced by ops are immutable. Leaves (tensors built through the
/// factories) may be written through `mutable_data()`, which is how the
/// optimizer and the finite-difference harness perturb parameters.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor from(Shape shape, std::initializer_list<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const noexcept { return node_->shape; }
    std::size_t rank() const noexcept { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return node_->value.size(); }

    std::span<const double> data() const noexcept { return node_->value; }
    std::span<double> mutable_data();
    double item() const;
    double operator[](std::size_t flat) const { return node_->value.at(flat); }

    bool requires_grad() const noexcept { return node_->requires_grad; }
    bool is_leaf() const noexcept { return node_->inputs.empty() && !node_->backward; }
    bool has_grad() const noexcept { return !node_->grad.empty(); }
    // Zero-filled view when no gradient has been accumulated yet.
    std::vector<double> grad() const;
    void zero_grad() noexcept { node_->grad.clear(); }

    // Independent leaf holding a copy of the values.
    Tensor clone(bool requires_grad = false) const;
    // Same values, cut from the tape.
    Tensor detach() const { return clone(false); }

    const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Thread-local switch; while disabled, ops record no tape.
bool grad_enabled() noexcept;

class NoGradScope {
public:
    NoGradScope() noexcept;
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    bool previous_;
};

/// Populates `grad` on every leaf reachable from `loss` that requires a
/// gradient, then releases the interior tape. Calling it twice on the same
/// loss throws ContractError; rebuild the forward pass instead.
void backward(const Tensor& loss);

}  // namespace fluoro::nx

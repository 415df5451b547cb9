#include "fluoro/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "fluoro/errors.hpp"

namespace fluoro::nx {

std::size_t numel(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

namespace {

thread_local bool recording = true;

}  // namespace

bool grad_enabled() noexcept { return recording; }

NoGradScope::NoGradScope() noexcept : previous_(recording) { recording = false; }

NoGradScope::~NoGradScope() { recording = previous_; }

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw DimensionError("tensor of shape " + shape_string(shape) + " given " +
                             std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

Tensor::Tensor() : node_(make_leaf({0}, {}, false)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = nx::numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = nx::numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
    return from(std::move(shape), std::vector<double>(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({}, {value}, requires_grad));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape()));
    }
    return node_->shape[axis];
}

std::span<double> Tensor::mutable_data() {
    if (!is_leaf()) throw ContractError("only leaf tensors are mutable");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

Tensor Tensor::clone(bool requires_grad) const {
    return Tensor(make_leaf(node_->shape, node_->value, requires_grad));
}

void backward(const Tensor& loss) {
    auto root = loss.node();
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_string(loss.shape()));
    if (root->consumed) throw ContractError("backward() already ran on this graph; rebuild the forward pass");
    if (!root->requires_grad) throw ContractError("loss does not depend on any tensor that requires a gradient");

    // Iterative post-order DFS over the nodes that carry gradients.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            auto* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }

    // Release the interior tape; leaves keep their accumulated gradients.
    for (auto* node : order) {
        if (node->backward) {
            node->backward = nullptr;
            node->inputs.clear();
            node->grad.clear();
            node->consumed = true;
        }
    }
    root->consumed = true;
}

}  // namespace fluoro::nx

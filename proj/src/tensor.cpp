#include "recam/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "recam/errors.hpp"

namespace recam {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(const std::vector<std::size_t>& shape, bool requires_grad) {
    return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const std::vector<std::size_t>& shape, double value, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = shape;
    node->data.assign(shape_product(shape), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(const std::vector<std::size_t>& shape, std::vector<double> data,
                         bool requires_grad) {
    if (shape_product(shape) != data.size()) {
        throw dimension_error("from_data: shape " + shape_to_string(shape) + " does not match " +
                              std::to_string(data.size()) + " values");
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = shape;
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) throw dimension_error("rows(): tensor is not 2-D: " + shape_to_string(shape()));
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) throw dimension_error("cols(): tensor is not 2-D: " + shape_to_string(shape()));
    return shape()[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return node_->data[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return node_->data[i * cols() + j];
}

double Tensor::item() const {
    if (size() != 1) {
        throw argument_error("item(): tensor has " + std::to_string(size()) + " elements, expected 1");
    }
    return node_->data[0];
}

std::vector<double>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) {
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }
}

namespace {

void build_topo(const std::shared_ptr<detail::TensorNode>& node,
                std::unordered_set<const detail::TensorNode*>& visited,
                std::vector<std::shared_ptr<detail::TensorNode>>& order) {
    // Iterative DFS; forward records for long sequences overflow the stack
    // with the recursive version.
    struct Frame {
        std::shared_ptr<detail::TensorNode> node;
        std::size_t next_parent = 0;
    };
    if (visited.count(node.get())) return;
    std::vector<Frame> stack;
    stack.push_back({node, 0});
    visited.insert(node.get());
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_parent < top.node->parents.size()) {
            auto& parent = top.node->parents[top.next_parent++];
            if (!visited.count(parent.get())) {
                visited.insert(parent.get());
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(top.node);
            stack.pop_back();
        }
    }
}

} // namespace

void Tensor::backward() const {
    if (size() != 1) {
        throw argument_error("backward(): loss must be scalar, got shape " +
                             shape_to_string(shape()));
    }
    std::unordered_set<const detail::TensorNode*> visited;
    std::vector<std::shared_ptr<detail::TensorNode>> order;
    build_topo(node_, visited, order);

    // Interior grads are per-sweep scratch; leaf grads persist and
    // accumulate across sweeps until the caller clears them.
    for (auto& n : order) {
        if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode& n = **it;
        if (n.backward_fn && !n.grad.empty()) {
            n.backward_fn(n);
        }
    }
}

bool Tensor::all_finite() const {
    for (double v : node_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace recam

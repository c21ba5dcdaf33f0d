#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace recam {

namespace detail {

/// One node of the differentiation record. Leaf nodes (parameters, inputs)
/// have no parents; interior nodes keep their parents alive through
/// shared_ptr so a loss tensor owns its whole forward record.
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty until first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

} // namespace detail

/// Dense row-major tensor of 64-bit reals. Value-semantic handle onto shared
/// node state: copies alias the same storage, which is what lets parameters
/// participate in many forward records while keeping one grad buffer.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(const std::vector<std::size_t>& shape, bool requires_grad = false);
    static Tensor full(const std::vector<std::size_t>& shape, double value, bool requires_grad = false);
    static Tensor from_data(const std::vector<std::size_t>& shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t ndim() const { return node_->shape.size(); }

    // 2-D helpers; throw dimension_error when the rank is wrong.
    std::size_t rows() const;
    std::size_t cols() const;

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double& at(std::size_t i) { return node_->data[i]; }
    double at(std::size_t i) const { return node_->data[i]; }
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    /// Value of a scalar (1-element) tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    /// Gradient buffer, allocated (zeroed) on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate
    /// additively into every recorded tensor until cleared.
    void backward() const;

    /// True when every element is finite.
    bool all_finite() const;

    std::shared_ptr<detail::TensorNode>& node() { return node_; }
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

    /// Identity of the underlying storage, for parameter bookkeeping.
    const void* storage_id() const { return node_.get(); }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

} // namespace recam

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pact/ad/tensor.hpp"

namespace pact::ad {

struct Node {
    Tensor value;
    Tensor grad; // allocated on demand, same shape as value
    bool grad_ready = false;
    bool requires_grad = false;
    bool backward_spent = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    void ensure_grad() {
        if (!grad_ready) {
            grad = Tensor(value.shape);
            grad_ready = true;
        }
    }
};

using NodePtr = std::shared_ptr<Node>;

// Handle to a graph node; cheap to copy.
class Value {
public:
    Value() = default;
    explicit Value(NodePtr n) : node_(std::move(n)) {}

    static Value leaf(Tensor t, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = requires_grad;
        return Value(std::move(n));
    }

    bool valid() const { return node_ != nullptr; }
    const Tensor& tensor() const { return node_->value; }
    Tensor& tensor() { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad_ready; }
    NodePtr node() const { return node_; }

    real item() const { return node_->value.v.at(0); }

private:
    NodePtr node_;
};

// Reverse accumulation from a scalar loss. Throws NonScalarLoss for
// non-scalar inputs and DoubleBackward if the same loss is replayed.
void backward(const Value& loss);

// Reset accumulated gradients on a parameter set.
void zero_grad(const std::vector<Value>& params);

// Internal helper for op implementations.
Value make_op(const char* op, Tensor value, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward_fn);

} // namespace pact::ad

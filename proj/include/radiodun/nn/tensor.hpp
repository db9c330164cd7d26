#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace radiodun::nn {

/// N x C x H x W, row-major; rank-deficient tensors (scalars, vectors) use size-1 dims.
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    size_t numel() const {
        return static_cast<size_t>(n) * static_cast<size_t>(c) * static_cast<size_t>(h) *
               static_cast<size_t>(w);
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

using Array = Eigen::ArrayXd;

/// One node of the reverse-mode graph. Owned via shared_ptr; `parents` keeps the
/// upstream subgraph alive, `backward_fn` scatters this node's grad into the parents.
struct Node {
    Shape shape;
    Array value;
    Array grad;  // empty until touched by backward
    bool requires_grad = false;
    std::string name;  // set for leaf parameters only
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // scatters this node's grad into parents

    Array& grad_buffer() {
        if (grad.size() == 0) grad = Array::Zero(static_cast<long>(shape.numel()));
        return grad;
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor full(Shape s, double fill, bool requires_grad = false);
    static Tensor from_array(Shape s, Array values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t numel() const { return node_->shape.numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    const Array& value() const { return node_->value; }
    Array& mutable_value() { return node_->value; }
    const Array& grad() const { return node_->grad; }

    double item() const;          // scalar tensors only
    double at(int n, int c, int h, int w) const;

    Node* raw() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }

    /// Reverse-mode sweep from this scalar node; accumulates into leaf grads.
    void backward() const;

private:
    std::shared_ptr<Node> node_;
};

/// Flat row-major offset into an NCHW buffer.
inline size_t offset(const Shape& s, int n, int c, int h, int w) {
    return ((static_cast<size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

/// Builds an interior node: requires_grad is inherited from the parents, and
/// backward_fn is attached only when some parent needs gradients.
Tensor make_op(Shape shape, Array value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn);

}  // namespace radiodun::nn

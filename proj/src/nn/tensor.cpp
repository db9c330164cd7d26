#include "radiodun/nn/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace radiodun::nn {

std::string Shape::str() const {
    std::ostringstream os;
    os << "{" << n << "," << c << "," << h << "," << w << "}";
    return os.str();
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
    return full(s, 0.0, requires_grad);
}

Tensor Tensor::full(Shape s, double fill, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = s;
    node->value = Array::Constant(static_cast<long>(s.numel()), fill);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_array(Shape s, Array values, bool requires_grad) {
    if (static_cast<size_t>(values.size()) != s.numel())
        throw std::invalid_argument("Tensor::from_array: size does not match shape " + s.str());
    auto node = std::make_shared<Node>();
    node->shape = s;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: not a scalar, shape " + shape().str());
    return node_->value(0);
}

double Tensor::at(int n, int c, int h, int w) const {
    return node_->value(static_cast<long>(offset(shape(), n, c, h, w)));
}

Tensor make_op(Shape shape, Array value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    for (const Tensor& p : parents) {
        node->requires_grad = node->requires_grad || p.requires_grad();
        node->parents.push_back(p.ptr());
    }
    if (node->requires_grad) node->backward_fn = std::move(backward_fn);
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    if (!node_) throw std::logic_error("backward on an undefined tensor");
    if (numel() != 1) throw std::logic_error("backward requires a scalar loss");
    if (!node_->requires_grad) throw std::logic_error("backward on a graph with no gradients");

    // Iterative post-order DFS over grad-requiring ancestors.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
        Node* cur = stack.back().first;
        const size_t idx = stack.back().second;
        if (idx < cur->parents.size()) {
            stack.back().second = idx + 1;
            Node* p = cur->parents[idx].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->grad_buffer()(0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

}  // namespace radiodun::nn

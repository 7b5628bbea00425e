#include "pixcorr/tensor.hpp"

#include "pixcorr/errors.hpp"

#include <algorithm>
#include <unordered_set>

namespace pixcorr {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->data.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

double Tensor::value() const {
    if (size() != 1)
        throw DimensionError("value() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor make_op_output(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    bool needs = false;
    for (const Tensor& in : inputs)
        if (in.requires_grad()) needs = true;
    if (needs) {
        auto node = out.node();
        node->requires_grad = true;
        node->backward_fn = std::move(backward_fn);
        node->parents.reserve(inputs.size());
        for (const Tensor& in : inputs) node->parents.push_back(in.node());
    }
    return out;
}

Graph Graph::record(const Tensor& root) {
    Graph g;
    g.root_ = root.node();
    if (!g.root_ || !g.root_->requires_grad) return g;

    // Iterative post-order DFS over parent links; emits inputs before
    // consumers, root last.
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        std::shared_ptr<TensorNode> node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({g.root_, 0});
    visited.insert(g.root_.get());

    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            const auto& parent = f.node->parents[f.next_parent++];
            if (parent->requires_grad && !visited.count(parent.get())) {
                visited.insert(parent.get());
                stack.push_back({parent, 0});
            }
        } else {
            g.topo_.push_back(f.node);
            stack.pop_back();
        }
    }
    return g;
}

void Graph::run_backward() {
    if (!root_) return;
    if (root_->data.size() != 1)
        throw DimensionError("backward root must be scalar, got shape " + shape_str(root_->shape));
    root_->ensure_grad();
    root_->grad[0] += 1.0;
    for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
        TensorNode& n = **it;
        n.ensure_grad();
        if (n.backward_fn) n.backward_fn(n);
    }
}

void Graph::release() {
    for (auto& n : topo_)
        if (n) n->release_graph();
}

void backward(const Tensor& scalar_loss) {
    Graph g = Graph::record(scalar_loss);
    g.run_backward();
    g.release();
}

} // namespace pixcorr

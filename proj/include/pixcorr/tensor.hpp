#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pixcorr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
class Tensor;

// One recorded value in the computation graph. Non-leaf nodes keep handles to
// their inputs plus a closure that routes the output gradient to them.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first needed
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void release_graph() {
        parents.clear();
        backward_fn = nullptr;
    }
};

// Value-semantic handle to a shared node. Copying a Tensor aliases the node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rank() const { return node_->shape.size(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double& at(std::size_t i) { return node_->data[i]; }
    double at(std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    // Gradient buffer, allocated as zeros on first access.
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    // Value of a 1-element tensor.
    double value() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_output(Shape shape, std::vector<double> data,
                                 std::vector<Tensor> inputs,
                                 std::function<void(TensorNode&)> backward_fn);
};

// Assembles an op result: output requires grad iff any input does, in which
// case the inputs and the backward closure are recorded on the node.
Tensor make_op_output(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn);

// Ordered record of the ops reaching a root tensor, inputs before consumers.
// run_backward may be called repeatedly on the same record (grads accumulate;
// clear them between passes for independent results).
class Graph {
public:
    static Graph record(const Tensor& root);

    // Seeds d(root)/d(root) = 1 and propagates in reverse topological order.
    void run_backward();

    // Drops parent links and closures of every recorded node, freeing the
    // graph while leaving leaf data/grads intact.
    void release();

    const std::vector<std::shared_ptr<TensorNode>>& order() const { return topo_; }

private:
    std::shared_ptr<TensorNode> root_;
    std::vector<std::shared_ptr<TensorNode>> topo_;
};

// Records, runs one backward pass from a scalar, then frees the graph.
void backward(const Tensor& scalar_loss);

} // namespace pixcorr

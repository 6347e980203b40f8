#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stad/tensor.hpp"

namespace stad {

// Reverse-mode tape. Ops append nodes in execution order; backward() walks the
// tape once in reverse, which is a reverse topological order by construction,
// and accumulates gradients into every node that (transitively) requires them.
// One Graph instance serves one training step; it is not thread-safe, but the
// kernels it calls may parallelize internally.
class Graph {
public:
    using Id = int32_t;

    // Leaf without gradient (inputs, constants).
    Id input(Tensor t);
    // Leaf with gradient (parameters).
    Id param(Tensor t);

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Zero tensor if the parameter never influenced the loss.
    Tensor grad(Id id) const;

    Id conv2d(Id x, Id w, Id b, int stride = 1, int dilation = 1);
    Id maxpool2d(Id x, int kernel = 2, int stride = 2, int dilation = 1);
    Id leaky_relu(Id x, float slope);
    Id relu(Id x) { return leaky_relu(x, 0.0f); }
    Id linear(Id x, Id w, Id b);

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id scale(Id a, float s);
    Id add_n(const std::vector<Id>& xs);

    Id sum(Id x);     // -> [1]
    Id sum_sq(Id x);  // -> [1]
    Id min2(Id a, Id b);  // scalars; ties resolve to the first argument

    // rows: list of [d] vectors -> [b,d]
    Id stack_rows(const std::vector<Id>& rows);

    // [b,d] -> [1]: sum of off-diagonal entries of the column correlation
    // matrix; zero-variance columns contribute zero.
    Id corr_offdiag(Id m);

    void backward(Id loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool needs_grad = false;
        std::function<void(Graph&)> backward_fn;  // empty for leaves
    };

    Id emplace(Tensor value, bool needs_grad, std::function<void(Graph&)> fn);
    Tensor& grad_buf(Id id);
    bool has_grad(Id id) const {
        return nodes_[static_cast<size_t>(id)].grad.defined();
    }
    void check(Id id) const;

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

}  // namespace stad

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "scenetok/tensor.hpp"

// Reverse-mode autodiff over a dynamically recorded graph. Each op records
// a node holding its forward value and a closure that pushes the node's
// gradient into its inputs. Graphs are built and consumed single-threaded;
// independent graphs may live on different threads.

namespace scenetok {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation during backward
    bool requires_grad = false;
    bool grad_allocated = false;
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backward_fn;  // may be empty (leaf/constant)
    const char* op = "leaf";

    void accumulate(const Tensor& g);
};

/// Handle to a graph node. Cheap to copy.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var constant(Tensor t);
    static Var leaf(Tensor t);  // participates in gradients

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    const Tensor& grad() const;
    const Shape& shape() const { return n_->value.shape(); }
    bool requires_grad() const { return n_->requires_grad; }
    NodePtr node() const { return n_; }

private:
    NodePtr n_;
};

/// Generic node constructor for modules that define bespoke ops.
/// `backward_fn` reads node.grad and accumulates into node.inputs[*]->grad.
Var make_op(const char* op, Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backward_fn);

// --- elementwise / structural ---------------------------------------------

/// a + b. Shapes must be equal, or b is a rank-1 [D] bias broadcast over the
/// last axis of a, or b is a scalar [1].
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);     // equal shapes
Var mul(const Var& a, const Var& b);     // elementwise, equal shapes
Var scale(const Var& a, double s);
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a, std::vector<std::size_t> perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var stack0(const std::vector<Var>& parts);  // adds a new leading axis
Var narrow(const Var& a, std::size_t axis, std::size_t start, std::size_t len);

/// y[i, ...] = x[i, ...] * r[i] for r of shape [x.dim(0)].
Var mul_axis0(const Var& x, const Var& r);

// --- nonlinearities / reductions -------------------------------------------

Var softmax(const Var& x, std::size_t axis);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& x);                      // tanh approximation
Var max_pool(const Var& x, std::size_t axis);  // reduces axis; ties route to first argmax
Var mean(const Var& x, std::size_t axis);
Var sum(const Var& x, std::size_t axis);
Var sum_all(const Var& x);  // -> [1]

// --- matmul / attention -----------------------------------------------------

/// Batched contraction over the last two axes. Leading (batch) axes must be
/// equal on both sides, or one operand is rank-2 and shared across batches.
Var matmul(const Var& a, const Var& b);

struct AttentionParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product multi-head attention over [B, L, D] operands.
/// `key_valid`, when given, has shape [B, Lk] with nonzero marking valid keys;
/// invalid keys receive a -1e9 logit offset before the softmax.
Var multi_head_attention(const Var& q, const Var& k, const Var& v,
                         const AttentionParams& p, std::size_t heads,
                         const Tensor* key_valid = nullptr);

/// Backpropagate from a scalar ([1]) output. Gradients accumulate into every
/// reachable node with requires_grad.
void backward(const Var& out);

}  // namespace scenetok

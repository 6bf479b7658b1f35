#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape owns every node created during one forward pass. Nodes are appended
// in evaluation order, so the tape index is already a topological order and
// backward() is a single reverse sweep. Build a fresh tape per forward pass.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "allnc/tensor.hpp"

namespace allnc::ad {

class Tape;

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Tensor& grad() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    // Receives the gradient of the root w.r.t. this node's output and
    // deposits contributions into its parents through accumulate()/grad_buffer().
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    // Appends an op node. requires_grad is inherited from the parents.
    Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
    // Forward-identical copy that never propagates gradient.
    Var stop_gradient(Var x);
    // Values produced by stop_gradient on this tape, in call order.
    const std::vector<Tensor>& stopped_values() const noexcept { return stopped_; }
    // Makes the k-th later stop_gradient call return values[k] instead of its
    // input, holding the stopped targets fixed across re-evaluations (used by
    // finite-difference checks). nullptr restores normal behaviour.
    void replay_stopped(const std::vector<Tensor>* values);

    // Accumulates d(root)/d(node) for every node reachable from root.
    // Throws ContractError if root is not scalar-valued.
    void backward(Var root);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    // Zero tensor of the node's shape when nothing was deposited.
    const Tensor& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Gradient buffer of a parent, allocated on first use; nullptr when the
    // parent does not require gradient.
    Tensor* grad_buffer(std::size_t id);
    void accumulate(std::size_t id, const Tensor& g);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    Var append(Node node);

    // deque: references returned by value()/grad() survive later pushes.
    std::deque<Node> nodes_;
    mutable std::deque<Tensor> zero_cache_;
    std::vector<Tensor> stopped_;
    const std::vector<Tensor>* replay_ = nullptr;
    std::size_t replay_cursor_ = 0;
};

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

// x (m x n) +/- r broadcast over rows; r has n elements.
Var add_row(Var x, Var r);
Var sub_row(Var x, Var r);

// 2-D product; rank-1 operands are single rows. Result is always rank 2.
Var matmul(Var a, Var b);
Var transpose(Var a);
// Same values under a new shape with the same element count.
Var reshape(Var a, Shape shape);

// max(x, 0); the subgradient at 0 is 0.
Var relu(Var x);

Var sum(Var x);
Var mean(Var x);
// Average of the rows of an m x n matrix, shape {n}.
Var mean_rows(Var x);
Var dot(Var a, Var b);
Var sum_squares(Var x);
Var frobenius_norm(Var x);

// Each row divided by its l2 norm. Throws DegenerateInputError on a zero row.
Var normalize_rows(Var x);
// Same as normalize_rows for a single vector; keeps the input shape.
Var l2_normalize(Var v);
// Per-row inner products of two m x n matrices, shape {m}.
Var rowwise_dot(Var a, Var b);

// Max-subtracted log-softmax over each row.
Var log_softmax_rows(Var x);
// out[i] = x(i, index[i]), shape {m}.
Var pick(Var x, std::span<const std::size_t> index);

inline Var stop_gradient(Var x) { return x.tape().stop_gradient(x); }

}  // namespace allnc::ad

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "calvid/tensor.hpp"

namespace calvid {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const Shape& shape() const;
    int64_t size() const { return value().size(); }
};

/// Records operations in execution order; reverse replay accumulates
/// adjoints. One tape per training step; grad() consumes the graph.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    /// Trainable input: participates in gradient computation.
    Var leaf(Tensor value);
    /// Non-trainable input: gradients never flow into it.
    Var constant(Tensor value);

    /// d(loss)/d(leaf) for each leaf, aligned with `leaves`. Leaves that did
    /// not participate in the loss graph get exact zeros. The graph is
    /// consumed: a second call throws.
    std::vector<Tensor> grad(const Var& loss, const std::vector<Var>& leaves);

    size_t node_count() const { return nodes_.size(); }

    // --- internals used by the op implementations ---
    struct Node {
        Tensor value;
        Tensor adjoint;  // allocated on first accumulation
        bool needs_grad = false;
        std::function<void()> backward;  // empty for leaves and constants
    };

    Node& node(int32_t id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
    Var emplace(Tensor value, bool needs_grad, std::function<void()> backward);
    /// adjoint(id) += delta (allocates zeros on first touch).
    void accumulate(int32_t id, const Tensor& delta);
    Tensor& adjoint(int32_t id);
    bool has_adjoint(int32_t id) const { return !nodes_[static_cast<size_t>(id)].adjoint.empty(); }

private:
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    bool consumed_ = false;
};

// ---- elementwise / structural ops ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var add_const(Var a, float c);
Var sigmoid(Var x);
Var tanh_act(Var x);
Var silu(Var x);
Var stop_gradient(Var x);
Var reshape(Var x, Shape shape);

// ---- matrix ops (rank-2 operands) ----
Var matmul(Var a, Var b);
Var transpose(Var x);
Var add_row_bias(Var x, Var bias);           // x:(R,C) + bias:(C)
Var slice_cols(Var x, int64_t c0, int64_t c1);
Var slice_rows(Var x, int64_t r0, int64_t r1);
Var concat_cols(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var repeat_interleave_rows(Var x, int64_t reps);
Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gamma, Var beta, float eps = 1e-5f);

// ---- reductions / losses (scalar outputs, 64-bit accumulation) ----
Var sum_all(Var x);
Var mean_all(Var x);
Var mse_loss(Var pred, Var target);
/// Brier score: mean squared deviation between confidence and binary label.
Var brier_loss(Var q, Var y);
/// Binary cross-entropy (negative log-likelihood), q clamped to [1e-7, 1-1e-7].
Var bce_loss(Var q, Var y);
/// Categorical cross-entropy over probability rows vs one-hot rows.
Var ce_loss(Var probs, Var onehot);

// Non-graph helpers shared by the fused ops.
namespace detail {
void matmul_values(const Tensor& a, const Tensor& b, Tensor& out);
}

}  // namespace calvid

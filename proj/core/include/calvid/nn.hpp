#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "calvid/autograd.hpp"
#include "calvid/rng.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

/// Binds model parameters (storage Tensors) to tape leaves, deduplicating so
/// each parameter becomes exactly one node per step.
class ParamBinder {
public:
    ParamBinder(Tape& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

    Var operator()(Tensor& param);

    const std::vector<Tensor*>& params() const { return params_; }
    const std::vector<Var>& vars() const { return vars_; }

private:
    Tape* tape_;
    bool trainable_;
    std::vector<Tensor*> params_;
    std::vector<Var> vars_;
    std::unordered_map<const Tensor*, size_t> index_;
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

struct Linear {
    Tensor w;  // (in, out)
    Tensor b;  // (out)

    void init(Rng& rng, int64_t in, int64_t out);
    void init_zero(int64_t in, int64_t out);
    Var apply(ParamBinder& bind, Var x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    void init(int64_t width);
    Var apply(ParamBinder& bind, Var x) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Bidirectional multi-head self-attention. `group` partitions the rows into
/// independent attention blocks (tokens never attend across groups); 0 means
/// one group spanning all rows.
struct MultiHeadAttention {
    int heads = 4;
    Linear wq, wk, wv, wo;

    void init(Rng& rng, int64_t width, int heads_count);
    Var apply(ParamBinder& bind, Var x, int64_t group = 0) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear fc1, fc2;

    void init(Rng& rng, int64_t width, int heads, int64_t mlp_width);
    Var apply(ParamBinder& bind, Var x, int64_t group = 0) const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Sinusoidal embedding of integer timesteps, one row per entry.
Tensor timestep_embedding(const std::vector<int>& t, int64_t width);
/// Sinusoidal embedding of a scalar in [0,1] (used for threshold conditioning).
Tensor scalar_embedding(double value, int64_t width);

}  // namespace calvid

#include "calvid/nn.hpp"

#include <cmath>

namespace calvid {

Var ParamBinder::operator()(Tensor& param) {
    auto it = index_.find(&param);
    if (it != index_.end()) return vars_[it->second];
    Var v = trainable_ ? tape_->leaf(param) : tape_->constant(param);
    index_.emplace(&param, params_.size());
    params_.push_back(&param);
    vars_.push_back(v);
    return v;
}

void Linear::init(Rng& rng, int64_t in, int64_t out) {
    const float s = 1.0f / std::sqrt(static_cast<float>(in));
    w = rng.normal_tensor({in, out});
    for (int64_t i = 0; i < w.size(); ++i) w[i] *= s;
    b = Tensor::zeros({out});
}

void Linear::init_zero(int64_t in, int64_t out) {
    w = Tensor::zeros({in, out});
    b = Tensor::zeros({out});
}

Var Linear::apply(ParamBinder& bind, Var x) const {
    auto& self = const_cast<Linear&>(*this);
    return add_row_bias(matmul(x, bind(self.w)), bind(self.b));
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
}

void LayerNorm::init(int64_t width) {
    gamma = Tensor::full({width}, 1.0f);
    beta = Tensor::zeros({width});
}

Var LayerNorm::apply(ParamBinder& bind, Var x) const {
    auto& self = const_cast<LayerNorm&>(*this);
    return layer_norm_rows(x, bind(self.gamma), bind(self.beta));
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gamma", gamma);
    fn(prefix + ".beta", beta);
}

void MultiHeadAttention::init(Rng& rng, int64_t width, int heads_count) {
    heads = heads_count;
    wq.init(rng, width, width);
    wk.init(rng, width, width);
    wv.init(rng, width, width);
    wo.init(rng, width, width);
}

Var MultiHeadAttention::apply(ParamBinder& bind, Var x, int64_t group) const {
    const int64_t rows = x.value().dim(0);
    const int64_t width = x.value().dim(1);
    if (width % heads != 0) throw ShapeError("attention width not divisible by head count");
    const int64_t head_dim = width / heads;
    const int64_t g = (group <= 0) ? rows : group;
    if (rows % g != 0) throw ShapeError("attention rows not divisible by group size");
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(head_dim));

    Var q = wq.apply(bind, x);
    Var k = wk.apply(bind, x);
    Var v = wv.apply(bind, x);

    std::vector<Var> group_ctx;
    group_ctx.reserve(static_cast<size_t>(rows / g));
    for (int64_t r0 = 0; r0 < rows; r0 += g) {
        Var qg = slice_rows(q, r0, r0 + g);
        Var kg = slice_rows(k, r0, r0 + g);
        Var vg = slice_rows(v, r0, r0 + g);
        std::vector<Var> head_ctx;
        head_ctx.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const int64_t c0 = h * head_dim;
            Var qh = slice_cols(qg, c0, c0 + head_dim);
            Var kh = slice_cols(kg, c0, c0 + head_dim);
            Var vh = slice_cols(vg, c0, c0 + head_dim);
            Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
            Var weights = softmax_rows(scores);
            head_ctx.push_back(matmul(weights, vh));
        }
        group_ctx.push_back(concat_cols(head_ctx));
    }
    Var ctx = (group_ctx.size() == 1) ? group_ctx[0] : concat_rows(group_ctx);
    return wo.apply(bind, ctx);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
    wq.visit(prefix + ".wq", fn);
    wk.visit(prefix + ".wk", fn);
    wv.visit(prefix + ".wv", fn);
    wo.visit(prefix + ".wo", fn);
}

void TransformerBlock::init(Rng& rng, int64_t width, int heads, int64_t mlp_width) {
    ln1.init(width);
    ln2.init(width);
    attn.init(rng, width, heads);
    fc1.init(rng, width, mlp_width);
    fc2.init(rng, mlp_width, width);
}

Var TransformerBlock::apply(ParamBinder& bind, Var x, int64_t group) const {
    Var h = add(x, attn.apply(bind, ln1.apply(bind, x), group));
    Var m = fc2.apply(bind, silu(fc1.apply(bind, ln2.apply(bind, h))));
    return add(h, m);
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& fn) {
    ln1.visit(prefix + ".ln1", fn);
    ln2.visit(prefix + ".ln2", fn);
    attn.visit(prefix + ".attn", fn);
    fc1.visit(prefix + ".fc1", fn);
    fc2.visit(prefix + ".fc2", fn);
}

Tensor timestep_embedding(const std::vector<int>& t, int64_t width) {
    const int64_t half = width / 2;
    Tensor out({static_cast<int64_t>(t.size()), width});
    for (size_t i = 0; i < t.size(); ++i) {
        for (int64_t j = 0; j < half; ++j) {
            const double freq =
                std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            const double angle = static_cast<double>(t[i]) * freq;
            out[static_cast<int64_t>(i) * width + j] = static_cast<float>(std::sin(angle));
            out[static_cast<int64_t>(i) * width + half + j] = static_cast<float>(std::cos(angle));
        }
        if (width % 2 == 1) out[static_cast<int64_t>(i) * width + width - 1] = 0.0f;
    }
    return out;
}

Tensor scalar_embedding(double value, int64_t width) {
    const int64_t half = width / 2;
    Tensor out({width});
    for (int64_t j = 0; j < half; ++j) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
        // Scalar conditioning lives in [0,1]; spread it over the same
        // frequency band as a ~100-step integer timestep.
        const double angle = value * 100.0 * freq;
        out[j] = static_cast<float>(std::sin(angle));
        out[half + j] = static_cast<float>(std::cos(angle));
    }
    return out;
}

}  // namespace calvid

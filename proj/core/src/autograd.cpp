#include "calvid/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "calvid/errors.hpp"

namespace calvid {

const Tensor& Var::value() const { return tape->node(id).value; }
const Shape& Var::shape() const { return value().shape(); }

Var Tape::leaf(Tensor value) { return emplace(std::move(value), grad_enabled_, {}); }
Var Tape::constant(Tensor value) { return emplace(std::move(value), false, {}); }

Var Tape::emplace(Tensor value, bool needs_grad, std::function<void()> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::adjoint(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.adjoint.empty()) n.adjoint = Tensor::zeros(n.value.shape());
    return n.adjoint;
}

void Tape::accumulate(int32_t id, const Tensor& delta) {
    Tensor& adj = adjoint(id);
    float* a = adj.data();
    const float* d = delta.data();
    for (int64_t i = 0; i < adj.size(); ++i) a[i] += d[i];
}

std::vector<Tensor> Tape::grad(const Var& loss, const std::vector<Var>& leaves) {
    if (consumed_) throw std::logic_error("GradientTape already consumed");
    if (!grad_enabled_) throw std::logic_error("grad() on a no-grad tape");
    if (loss.tape != this) throw std::logic_error("loss recorded on a different tape");
    if (loss.value().size() != 1)
        throw ShapeError("grad requires a scalar loss, got shape " + shape_str(loss.shape()));

    adjoint(loss.id)[0] = 1.0f;
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.needs_grad || n.adjoint.empty()) continue;
        if (!n.adjoint.all_finite())
            throw DivergenceError("NaN encountered during backward pass at node " + std::to_string(i));
        if (n.backward) n.backward();
    }

    std::vector<Tensor> out;
    out.reserve(leaves.size());
    for (const Var& leaf : leaves) {
        if (leaf.tape != this) throw std::logic_error("leaf recorded on a different tape");
        Node& n = nodes_[static_cast<size_t>(leaf.id)];
        out.push_back(n.adjoint.empty() ? Tensor::zeros(n.value.shape()) : n.adjoint);
    }
    consumed_ = true;
    for (Node& n : nodes_) n.backward = nullptr;
    return out;
}

namespace {

void check_rank2(const Var& v, const char* what) {
    if (v.value().rank() != 2) throw ShapeError(std::string(what) + ": expected rank-2 tensor");
}

// out = unary(x) with dx = grad_fn(out, x, dOut)
template <typename Fwd, typename Bwd>
Var unary_op(Var x, Fwd fwd, Bwd make_backward) {
    Tape& t = *x.tape;
    Tensor out = fwd(x.value());
    bool ng = t.node(x.id).needs_grad;
    if (!ng) return t.emplace(std::move(out), false, {});
    Var result = t.emplace(std::move(out), true, {});
    t.node(result.id).backward = make_backward(&t, x.id, result.id);
    return result;
}

}  // namespace

Var add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const float *pa = a.value().data(), *pb = b.value().data();
    float* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ia = a.id, ib = b.id, ir = r.id;
        t.node(ir).backward = [&t, ia, ib, ir] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ia).needs_grad) t.accumulate(ia, d);
            if (t.node(ib).needs_grad) t.accumulate(ib, d);
        };
    }
    return r;
}

Var sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const float *pa = a.value().data(), *pb = b.value().data();
    float* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
    bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ia = a.id, ib = b.id, ir = r.id;
        t.node(ir).backward = [&t, ia, ib, ir] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ia).needs_grad) t.accumulate(ia, d);
            if (t.node(ib).needs_grad) {
                Tensor& adj = t.adjoint(ib);
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] -= d[i];
            }
        };
    }
    return r;
}

Var mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const float *pa = a.value().data(), *pb = b.value().data();
    float* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ia = a.id, ib = b.id, ir = r.id;
        t.node(ir).backward = [&t, ia, ib, ir] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ia).needs_grad) {
                Tensor& adj = t.adjoint(ia);
                const float* vb = t.node(ib).value.data();
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i] * vb[i];
            }
            if (t.node(ib).needs_grad) {
                Tensor& adj = t.adjoint(ib);
                const float* va = t.node(ia).value.data();
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i] * va[i];
            }
        };
    }
    return r;
}

Var scale(Var a, float s) {
    return unary_op(
        a,
        [s](const Tensor& x) {
            Tensor out(x.shape());
            for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
            return out;
        },
        [s](Tape* t, int32_t ix, int32_t ir) {
            return [t, ix, ir, s] {
                const Tensor& d = t->node(ir).adjoint;
                Tensor& adj = t->adjoint(ix);
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i] * s;
            };
        });
}

Var add_const(Var a, float c) {
    return unary_op(
        a,
        [c](const Tensor& x) {
            Tensor out(x.shape());
            for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + c;
            return out;
        },
        [](Tape* t, int32_t ix, int32_t ir) {
            return [t, ix, ir] { t->accumulate(ix, t->node(ir).adjoint); };
        });
}

Var sigmoid(Var x) {
    return unary_op(
        x,
        [](const Tensor& v) {
            Tensor out(v.shape());
            for (int64_t i = 0; i < v.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-v[i]));
            return out;
        },
        [](Tape* t, int32_t ix, int32_t ir) {
            return [t, ix, ir] {
                const Tensor& d = t->node(ir).adjoint;
                const Tensor& y = t->node(ir).value;
                Tensor& adj = t->adjoint(ix);
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i] * y[i] * (1.0f - y[i]);
            };
        });
}

Var tanh_act(Var x) {
    return unary_op(
        x,
        [](const Tensor& v) {
            Tensor out(v.shape());
            for (int64_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
            return out;
        },
        [](Tape* t, int32_t ix, int32_t ir) {
            return [t, ix, ir] {
                const Tensor& d = t->node(ir).adjoint;
                const Tensor& y = t->node(ir).value;
                Tensor& adj = t->adjoint(ix);
                for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i] * (1.0f - y[i] * y[i]);
            };
        });
}

Var silu(Var x) {
    return unary_op(
        x,
        [](const Tensor& v) {
            Tensor out(v.shape());
            for (int64_t i = 0; i < v.size(); ++i) {
                float s = 1.0f / (1.0f + std::exp(-v[i]));
                out[i] = v[i] * s;
            }
            return out;
        },
        [](Tape* t, int32_t ix, int32_t ir) {
            return [t, ix, ir] {
                const Tensor& d = t->node(ir).adjoint;
                const Tensor& v = t->node(ix).value;
                Tensor& adj = t->adjoint(ix);
                for (int64_t i = 0; i < adj.size(); ++i) {
                    float s = 1.0f / (1.0f + std::exp(-v[i]));
                    adj[i] += d[i] * s * (1.0f + v[i] * (1.0f - s));
                }
            };
        });
}

Var stop_gradient(Var x) {
    // Value passes through; the node has no parents so backward stops here.
    return x.tape->constant(x.value());
}

Var reshape(Var x, Shape shape) {
    Tape& t = *x.tape;
    Tensor out = x.value().reshaped(shape);
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir] {
            const Tensor& d = t.node(ir).adjoint;
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d[i];
        };
    }
    return r;
}

namespace detail {

void matmul_values(const Tensor& a, const Tensor& b, Tensor& out) {
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = out.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (M * K * N > 16384)
#endif
    for (int64_t i = 0; i < M; ++i) {
        float* ci = pc + i * N;
        for (int64_t j = 0; j < N; ++j) ci[j] = 0.0f;
        const float* ai = pa + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const float aik = ai[k];
            const float* bk = pb + k * N;
            for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
        }
    }
}

// dA += dC * B^T  (dot of contiguous rows)
void matmul_grad_a(const Tensor& dc, const Tensor& b, Tensor& da) {
    const int64_t M = da.dim(0), K = da.dim(1), N = b.dim(1);
    const float* pdc = dc.data();
    const float* pb = b.data();
    float* pda = da.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (M * K * N > 16384)
#endif
    for (int64_t i = 0; i < M; ++i) {
        const float* dci = pdc + i * N;
        float* dai = pda + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const float* bk = pb + k * N;
            float acc = 0.0f;
            for (int64_t j = 0; j < N; ++j) acc += dci[j] * bk[j];
            dai[k] += acc;
        }
    }
}

// dB += A^T * dC
void matmul_grad_b(const Tensor& a, const Tensor& dc, Tensor& db) {
    const int64_t M = a.dim(0), K = db.dim(0), N = db.dim(1);
    const float* pa = a.data();
    const float* pdc = dc.data();
    float* pdb = db.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (M * K * N > 16384)
#endif
    for (int64_t k = 0; k < K; ++k) {
        float* dbk = pdb + k * N;
        for (int64_t i = 0; i < M; ++i) {
            const float aik = pa[i * K + k];
            if (aik == 0.0f) continue;
            const float* dci = pdc + i * N;
            for (int64_t j = 0; j < N; ++j) dbk[j] += aik * dci[j];
        }
    }
}

}  // namespace detail

Var matmul(Var a, Var b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.value().dim(1) != b.value().dim(0))
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tape& t = *a.tape;
    Tensor out({a.value().dim(0), b.value().dim(1)});
    detail::matmul_values(a.value(), b.value(), out);
    bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ia = a.id, ib = b.id, ir = r.id;
        t.node(ir).backward = [&t, ia, ib, ir] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ia).needs_grad) detail::matmul_grad_a(d, t.node(ib).value, t.adjoint(ia));
            if (t.node(ib).needs_grad) detail::matmul_grad_b(t.node(ia).value, d, t.adjoint(ib));
        };
    }
    return r;
}

Var transpose(Var x) {
    check_rank2(x, "transpose");
    Tape& t = *x.tape;
    const Tensor& v = x.value();
    const int64_t R = v.dim(0), C = v.dim(1);
    Tensor out({C, R});
    for (int64_t i = 0; i < R; ++i)
        for (int64_t j = 0; j < C; ++j) out[j * R + i] = v[i * C + j];
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, R, C] {
            const Tensor& d = t.node(ir).adjoint;
            Tensor& adj = t.adjoint(ix);
            for (int64_t j = 0; j < C; ++j)
                for (int64_t i = 0; i < R; ++i) adj[i * C + j] += d[j * R + i];
        };
    }
    return r;
}

Var add_row_bias(Var x, Var bias) {
    check_rank2(x, "add_row_bias");
    if (bias.value().rank() != 1 || bias.value().dim(0) != x.value().dim(1))
        throw ShapeError("add_row_bias: bias extent must equal column count");
    Tape& t = *x.tape;
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    Tensor out({R, C});
    const float *px = x.value().data(), *pb = bias.value().data();
    float* po = out.data();
    for (int64_t i = 0; i < R; ++i)
        for (int64_t j = 0; j < C; ++j) po[i * C + j] = px[i * C + j] + pb[j];
    bool ng = t.node(x.id).needs_grad || t.node(bias.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ib = bias.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ib, ir, R, C] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ix).needs_grad) t.accumulate(ix, d);
            if (t.node(ib).needs_grad) {
                Tensor& adj = t.adjoint(ib);
                for (int64_t i = 0; i < R; ++i)
                    for (int64_t j = 0; j < C; ++j) adj[j] += d[i * C + j];
            }
        };
    }
    return r;
}

Var slice_cols(Var x, int64_t c0, int64_t c1) {
    check_rank2(x, "slice_cols");
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    if (!(0 <= c0 && c0 < c1 && c1 <= C)) throw ShapeError("slice_cols: bad range");
    Tape& t = *x.tape;
    const int64_t W = c1 - c0;
    Tensor out({R, W});
    const float* px = x.value().data();
    for (int64_t i = 0; i < R; ++i)
        for (int64_t j = 0; j < W; ++j) out[i * W + j] = px[i * C + c0 + j];
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, R, C, c0, W] {
            const Tensor& d = t.node(ir).adjoint;
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < R; ++i)
                for (int64_t j = 0; j < W; ++j) adj[i * C + c0 + j] += d[i * W + j];
        };
    }
    return r;
}

Var slice_rows(Var x, int64_t r0, int64_t r1) {
    check_rank2(x, "slice_rows");
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    if (!(0 <= r0 && r0 < r1 && r1 <= R)) throw ShapeError("slice_rows: bad range");
    Tape& t = *x.tape;
    const int64_t H = r1 - r0;
    Tensor out({H, C});
    const float* px = x.value().data();
    for (int64_t i = 0; i < H * C; ++i) out[i] = px[r0 * C + i];
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, r0, H, C] {
            const Tensor& d = t.node(ir).adjoint;
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < H * C; ++i) adj[r0 * C + i] += d[i];
        };
    }
    return r;
}

Var concat_cols(Var a, Var b) {
    check_rank2(a, "concat_cols");
    check_rank2(b, "concat_cols");
    if (a.value().dim(0) != b.value().dim(0)) throw ShapeError("concat_cols: row counts differ");
    Tape& t = *a.tape;
    const int64_t R = a.value().dim(0), Ca = a.value().dim(1), Cb = b.value().dim(1);
    Tensor out({R, Ca + Cb});
    const float *pa = a.value().data(), *pb = b.value().data();
    for (int64_t i = 0; i < R; ++i) {
        float* row = out.data() + i * (Ca + Cb);
        for (int64_t j = 0; j < Ca; ++j) row[j] = pa[i * Ca + j];
        for (int64_t j = 0; j < Cb; ++j) row[Ca + j] = pb[i * Cb + j];
    }
    bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ia = a.id, ib = b.id, ir = r.id;
        t.node(ir).backward = [&t, ia, ib, ir, R, Ca, Cb] {
            const Tensor& d = t.node(ir).adjoint;
            if (t.node(ia).needs_grad) {
                Tensor& adj = t.adjoint(ia);
                for (int64_t i = 0; i < R; ++i)
                    for (int64_t j = 0; j < Ca; ++j) adj[i * Ca + j] += d[i * (Ca + Cb) + j];
            }
            if (t.node(ib).needs_grad) {
                Tensor& adj = t.adjoint(ib);
                for (int64_t i = 0; i < R; ++i)
                    for (int64_t j = 0; j < Cb; ++j) adj[i * Cb + j] += d[i * (Ca + Cb) + Ca + j];
            }
        };
    }
    return r;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty list");
    Var acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = concat_cols(acc, parts[i]);
    return acc;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty list");
    Tape& t = *parts[0].tape;
    const int64_t C = parts[0].value().dim(1);
    int64_t R = 0;
    bool ng = false;
    for (const Var& p : parts) {
        check_rank2(p, "concat_rows");
        if (p.value().dim(1) != C) throw ShapeError("concat_rows: column counts differ");
        R += p.value().dim(0);
        ng = ng || t.node(p.id).needs_grad;
    }
    Tensor out({R, C});
    int64_t row = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (int64_t i = 0; i < v.size(); ++i) out[row * C + i] = v[i];
        row += v.dim(0);
    }
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        std::vector<int32_t> ids;
        std::vector<int64_t> rows;
        for (const Var& p : parts) {
            ids.push_back(p.id);
            rows.push_back(p.value().dim(0));
        }
        int32_t ir = r.id;
        t.node(ir).backward = [&t, ids, rows, ir, C] {
            const Tensor& d = t.node(ir).adjoint;
            int64_t row = 0;
            for (size_t k = 0; k < ids.size(); ++k) {
                if (t.node(ids[k]).needs_grad) {
                    Tensor& adj = t.adjoint(ids[k]);
                    for (int64_t i = 0; i < rows[k] * C; ++i) adj[i] += d[row * C + i];
                }
                row += rows[k];
            }
        };
    }
    return r;
}

Var repeat_interleave_rows(Var x, int64_t reps) {
    check_rank2(x, "repeat_interleave_rows");
    if (reps < 1) throw ShapeError("repeat_interleave_rows: reps must be >= 1");
    Tape& t = *x.tape;
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    Tensor out({R * reps, C});
    const float* px = x.value().data();
    for (int64_t i = 0; i < R; ++i)
        for (int64_t k = 0; k < reps; ++k)
            for (int64_t j = 0; j < C; ++j) out[(i * reps + k) * C + j] = px[i * C + j];
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, R, C, reps] {
            const Tensor& d = t.node(ir).adjoint;
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < R; ++i)
                for (int64_t k = 0; k < reps; ++k)
                    for (int64_t j = 0; j < C; ++j) adj[i * C + j] += d[(i * reps + k) * C + j];
        };
    }
    return r;
}

Var softmax_rows(Var x) {
    check_rank2(x, "softmax_rows");
    Tape& t = *x.tape;
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    Tensor out({R, C});
    const float* px = x.value().data();
    for (int64_t i = 0; i < R; ++i) {
        const float* row = px + i * C;
        float mx = row[0];
        for (int64_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        float* orow = out.data() + i * C;
        for (int64_t j = 0; j < C; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += static_cast<double>(orow[j]);
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j < C; ++j) orow[j] *= inv;
    }
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, R, C] {
            const Tensor& d = t.node(ir).adjoint;
            const Tensor& y = t.node(ir).value;
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < R; ++i) {
                const float* drow = d.data() + i * C;
                const float* yrow = y.data() + i * C;
                double dot = 0.0;
                for (int64_t j = 0; j < C; ++j) dot += static_cast<double>(drow[j]) * yrow[j];
                float* arow = adj.data() + i * C;
                for (int64_t j = 0; j < C; ++j)
                    arow[j] += yrow[j] * (drow[j] - static_cast<float>(dot));
            }
        };
    }
    return r;
}

Var layer_norm_rows(Var x, Var gamma, Var beta, float eps) {
    check_rank2(x, "layer_norm_rows");
    const int64_t R = x.value().dim(0), C = x.value().dim(1);
    if (gamma.value().size() != C || beta.value().size() != C)
        throw ShapeError("layer_norm_rows: gamma/beta extent must equal column count");
    Tape& t = *x.tape;
    Tensor out({R, C});
    Tensor xhat({R, C});
    Tensor inv_std({R});
    const float* px = x.value().data();
    const float *pg = gamma.value().data(), *pb = beta.value().data();
    for (int64_t i = 0; i < R; ++i) {
        const float* row = px + i * C;
        double mean = 0.0;
        for (int64_t j = 0; j < C; ++j) mean += row[j];
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (int64_t j = 0; j < C; ++j) {
            double dv = row[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(C);
        const float istd = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std[i] = istd;
        for (int64_t j = 0; j < C; ++j) {
            const float xh = (row[j] - static_cast<float>(mean)) * istd;
            xhat[i * C + j] = xh;
            out[i * C + j] = xh * pg[j] + pb[j];
        }
    }
    bool ng =
        t.node(x.id).needs_grad || t.node(gamma.id).needs_grad || t.node(beta.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ig = gamma.id, ibt = beta.id, ir = r.id;
        auto xh = std::make_shared<Tensor>(std::move(xhat));
        auto istd = std::make_shared<Tensor>(std::move(inv_std));
        t.node(ir).backward = [&t, ix, ig, ibt, ir, R, C, xh, istd] {
            const Tensor& d = t.node(ir).adjoint;
            const float* pg = t.node(ig).value.data();
            if (t.node(ig).needs_grad) {
                Tensor& adj = t.adjoint(ig);
                for (int64_t i = 0; i < R; ++i)
                    for (int64_t j = 0; j < C; ++j) adj[j] += d[i * C + j] * (*xh)[i * C + j];
            }
            if (t.node(ibt).needs_grad) {
                Tensor& adj = t.adjoint(ibt);
                for (int64_t i = 0; i < R; ++i)
                    for (int64_t j = 0; j < C; ++j) adj[j] += d[i * C + j];
            }
            if (t.node(ix).needs_grad) {
                Tensor& adj = t.adjoint(ix);
                for (int64_t i = 0; i < R; ++i) {
                    const float* drow = d.data() + i * C;
                    const float* xrow = xh->data() + i * C;
                    double sum_dg = 0.0, sum_dgx = 0.0;
                    for (int64_t j = 0; j < C; ++j) {
                        const double dg = static_cast<double>(drow[j]) * pg[j];
                        sum_dg += dg;
                        sum_dgx += dg * xrow[j];
                    }
                    const float m1 = static_cast<float>(sum_dg / C);
                    const float m2 = static_cast<float>(sum_dgx / C);
                    const float is = (*istd)[i];
                    for (int64_t j = 0; j < C; ++j)
                        adj[i * C + j] += is * (drow[j] * pg[j] - m1 - xrow[j] * m2);
                }
            }
        };
    }
    return r;
}

Var sum_all(Var x) {
    Tape& t = *x.tape;
    Tensor out = Tensor::scalar(static_cast<float>(x.value().sum()));
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir] {
            const float d = t.node(ir).adjoint[0];
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d;
        };
    }
    return r;
}

Var mean_all(Var x) {
    Tape& t = *x.tape;
    const int64_t n = x.value().size();
    Tensor out = Tensor::scalar(static_cast<float>(x.value().sum() / static_cast<double>(n)));
    bool ng = t.node(x.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ix = x.id, ir = r.id;
        t.node(ir).backward = [&t, ix, ir, n] {
            const float d = t.node(ir).adjoint[0] / static_cast<float>(n);
            Tensor& adj = t.adjoint(ix);
            for (int64_t i = 0; i < adj.size(); ++i) adj[i] += d;
        };
    }
    return r;
}

Var mse_loss(Var pred, Var target) {
    check_same_shape(pred.value(), target.value(), "mse_loss");
    Tape& t = *pred.tape;
    const int64_t n = pred.value().size();
    const float *pp = pred.value().data(), *pt = target.value().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dv = static_cast<double>(pp[i]) - pt[i];
        acc += dv * dv;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    bool ng = t.node(pred.id).needs_grad || t.node(target.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ip = pred.id, it = target.id, ir = r.id;
        t.node(ir).backward = [&t, ip, it, ir, n] {
            const float d = t.node(ir).adjoint[0];
            const float* vp = t.node(ip).value.data();
            const float* vt = t.node(it).value.data();
            const float k = 2.0f * d / static_cast<float>(n);
            if (t.node(ip).needs_grad) {
                Tensor& adj = t.adjoint(ip);
                for (int64_t i = 0; i < n; ++i) adj[i] += k * (vp[i] - vt[i]);
            }
            if (t.node(it).needs_grad) {
                Tensor& adj = t.adjoint(it);
                for (int64_t i = 0; i < n; ++i) adj[i] -= k * (vp[i] - vt[i]);
            }
        };
    }
    return r;
}

Var brier_loss(Var q, Var y) { return mse_loss(q, y); }

namespace {
constexpr float kProbClamp = 1e-7f;
}

Var bce_loss(Var q, Var y) {
    check_same_shape(q.value(), y.value(), "bce_loss");
    Tape& t = *q.tape;
    const int64_t n = q.value().size();
    const float *pq = q.value().data(), *py = y.value().data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double qi = std::clamp(pq[i], kProbClamp, 1.0f - kProbClamp);
        acc -= py[i] * std::log(qi) + (1.0 - py[i]) * std::log(1.0 - qi);
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    bool ng = t.node(q.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t iq = q.id, iy = y.id, ir = r.id;
        t.node(ir).backward = [&t, iq, iy, ir, n] {
            const float d = t.node(ir).adjoint[0];
            const float* vq = t.node(iq).value.data();
            const float* vy = t.node(iy).value.data();
            Tensor& adj = t.adjoint(iq);
            for (int64_t i = 0; i < n; ++i) {
                if (vq[i] <= kProbClamp || vq[i] >= 1.0f - kProbClamp) continue;
                adj[i] += d * (vq[i] - vy[i]) / (vq[i] * (1.0f - vq[i])) / static_cast<float>(n);
            }
        };
    }
    return r;
}

Var ce_loss(Var probs, Var onehot) {
    check_same_shape(probs.value(), onehot.value(), "ce_loss");
    check_rank2(probs, "ce_loss");
    Tape& t = *probs.tape;
    const int64_t R = probs.value().dim(0), C = probs.value().dim(1);
    const float *pp = probs.value().data(), *py = onehot.value().data();
    double acc = 0.0;
    for (int64_t i = 0; i < R * C; ++i) {
        if (py[i] == 0.0f) continue;
        acc -= static_cast<double>(py[i]) * std::log(std::max(pp[i], kProbClamp));
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(R)));
    bool ng = t.node(probs.id).needs_grad;
    Var r = t.emplace(std::move(out), ng, {});
    if (ng) {
        int32_t ip = probs.id, iy = onehot.id, ir = r.id;
        t.node(ir).backward = [&t, ip, iy, ir, R, C] {
            const float d = t.node(ir).adjoint[0];
            const float* vp = t.node(ip).value.data();
            const float* vy = t.node(iy).value.data();
            Tensor& adj = t.adjoint(ip);
            for (int64_t i = 0; i < R * C; ++i) {
                if (vy[i] == 0.0f || vp[i] <= kProbClamp) continue;
                adj[i] -= d * vy[i] / vp[i] / static_cast<float>(R);
            }
        };
    }
    return r;
}

}  // namespace calvid

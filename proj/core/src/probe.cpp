#include "calvid/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calvid/autograd.hpp"
#include "calvid/errors.hpp"
#include "calvid/rng.hpp"

namespace calvid {

const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::kFsc: return "fsc";
        case HeadKind::kMcc: return "mcc";
        case HeadKind::kCsBc: return "csbc";
    }
    return "csbc";
}

HeadKind head_kind_from_name(const std::string& name) {
    for (HeadKind k : {HeadKind::kFsc, HeadKind::kMcc, HeadKind::kCsBc})
        if (name == head_kind_name(k)) return k;
    throw ConfigError("unknown head kind: " + name);
}

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::kBrier: return "brier";
        case ScoreKind::kBce: return "bce";
        case ScoreKind::kCe: return "ce";
    }
    return "brier";
}

ScoreKind score_kind_from_name(const std::string& name) {
    for (ScoreKind k : {ScoreKind::kBrier, ScoreKind::kBce, ScoreKind::kCe})
        if (name == score_kind_name(k)) return k;
    throw ConfigError("unknown score kind: " + name);
}

Tensor distance(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "distance");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i] - b[i]);
    return out;
}

Tensor accuracy_mask(const Tensor& d, double eps) {
    if (!(eps > 0.0)) throw ConfigError("accuracy threshold must be positive");
    const float e = static_cast<float>(eps);
    Tensor out(d.shape());
    for (int64_t i = 0; i < d.size(); ++i) out[i] = (d[i] <= e) ? 1.0f : 0.0f;
    return out;
}

double velocity_scale(int t, const NoiseSchedule& sched) {
    if (t < 1) throw ShapeError("velocity scale needs t >= 1");
    const double abar_t = sched.abar(t);
    const double abar_p = sched.abar(t - 1);
    return std::abs(std::sqrt(abar_t * (1.0 - abar_p)) - std::sqrt(abar_p * (1.0 - abar_t)));
}

double eps_to_eps_v(double eps, int t, const NoiseSchedule& sched) {
    const double denom = velocity_scale(t, sched);
    if (denom <= 1e-8)
        throw DivergenceError("velocity threshold scaling is singular at t=" + std::to_string(t) +
                              " (abar_t ~ abar_{t-1})");
    return eps / denom;
}

ThresholdSet ThresholdSet::adaptive() {
    ThresholdSet ts;
    for (int i = 0; i < 15; ++i) ts.values.push_back(0.1 + 0.2 * i / 14.0);
    for (int i = 1; i < 14; ++i) ts.values.push_back(0.3 + 0.7 * i / 13.0);
    return ts;
}

ThresholdSet ThresholdSet::linear(int count, double lo, double hi) {
    if (count < 1 || !(lo > 0.0) || !(hi > lo)) throw ConfigError("bad threshold range");
    ThresholdSet ts;
    for (int i = 0; i < count; ++i)
        ts.values.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1.0));
    return ts;
}

BinStructure BinStructure::from_thresholds(const ThresholdSet& ts) {
    BinStructure b;
    b.edges.push_back(0.0);
    for (double v : ts.values) {
        if (!(v > b.edges.back()))
            throw ConfigError("threshold set must be strictly increasing and positive");
        b.edges.push_back(v);
    }
    b.edges.push_back(std::numeric_limits<double>::infinity());
    return b;
}

int BinStructure::bin_of(double d) const {
    // O_i = [edge_i, edge_{i+1}); d < 0 never occurs for distances
    int lo = 0, hi = bin_count() - 1;
    while (lo < hi) {
        const int mid = (lo + hi + 1) / 2;
        if (d >= edges[static_cast<size_t>(mid)])
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

bool BinStructure::is_edge(double e) const {
    for (double v : edges)
        if (v == e) return true;
    return false;
}

ProbeHead ProbeHead::create(const ProbeConfig& cfg, uint64_t seed) {
    ProbeHead h;
    h.cfg = cfg;
    h.seed = seed;
    Rng rng(seed, 41);
    h.input_proj.init(rng, 2 * cfg.cond_width, cfg.width);
    h.blocks.resize(static_cast<size_t>(cfg.blocks));
    for (auto& b : h.blocks) b.init(rng, cfg.width, cfg.heads, cfg.width * cfg.mlp_mult);
    h.final_ln.init(cfg.width);
    h.out.init_zero(cfg.width, h.out_dim());
    return h;
}

void ProbeHead::visit(const ParamVisitor& fn) {
    input_proj.visit("input_proj", fn);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].visit("blocks." + std::to_string(i), fn);
    final_ln.visit("final_ln", fn);
    out.visit("out", fn);
}

Var probe_logits(const ProbeHead& head, Tape& tape, ParamBinder& bind, Var z, Var cond,
                 std::optional<double> eps_v) {
    const auto& cfg = head.cfg;
    if (cfg.head == HeadKind::kCsBc && !eps_v)
        throw ConfigError("CS-BC head requires a conditioning threshold");
    if (cfg.head != HeadKind::kCsBc && eps_v)
        throw ConfigError("only the CS-BC head takes a conditioning threshold");
    const int64_t S = cfg.tokens_per_frame();
    if (z.value().rank() != 2 || z.value().dim(1) != cfg.cond_width ||
        z.value().dim(0) % S != 0)
        throw ShapeError("probe features must be (frames*S, cond_width)");
    if (cond.value().rank() != 2 || cond.value().dim(0) * S != z.value().dim(0) ||
        cond.value().dim(1) != cfg.cond_width)
        throw ShapeError("conditioning rows must match the feature frames");

    auto& h = const_cast<ProbeHead&>(head);
    Var c = cond;
    if (eps_v) {
        Tensor emb = scalar_embedding(*eps_v, cfg.cond_width);
        c = add_row_bias(c, tape.constant(emb));
    }
    Var x = concat_cols(z, repeat_interleave_rows(c, S));
    Var cur = h.input_proj.apply(bind, x);
    for (const auto& block : h.blocks) cur = block.apply(bind, cur, S);
    return h.out.apply(bind, h.final_ln.apply(bind, cur));
}

ConfidenceMap probe_forward(const ProbeHead& head, const Tensor& z, const Tensor& cond,
                            std::optional<double> eps_v) {
    const auto& cfg = head.cfg;
    if (z.rank() != 2 || z.dim(0) != cfg.tokens_per_frame() * cfg.frames)
        throw ShapeError("probe_forward expects features for the full latent video");
    Tape tape(false);
    ParamBinder bind(tape, false);
    Var logits = probe_logits(head, tape, bind, tape.constant(z), tape.constant(cond), eps_v);

    ConfidenceMap map;
    map.kind = cfg.head;
    if (cfg.head == HeadKind::kMcc) {
        Var rows = reshape(logits, {z.dim(0) * cfg.latent_channels, cfg.bins});
        Tensor probs = softmax_rows(rows).value();
        map.values = probs.reshaped({cfg.frames, cfg.lat_h, cfg.lat_w, cfg.latent_channels,
                                     cfg.bins});
    } else {
        Tensor q = sigmoid(logits).value();
        map.values = q.reshaped({cfg.frames, cfg.lat_h, cfg.lat_w, cfg.latent_channels});
    }
    return map;
}

Tensor mcc_cumulative_confidence(const ConfidenceMap& simplex, double edge,
                                 const BinStructure& bins) {
    if (simplex.kind != HeadKind::kMcc) throw ConfigError("cumulative confidence needs MCC maps");
    if (!bins.is_edge(edge)) throw ConfigError("edge is not part of the bin structure");
    const Tensor& v = simplex.values;
    if (v.rank() < 1 || v.dim(v.rank() - 1) != bins.bin_count())
        throw ShapeError("simplex trailing axis must match the bin count");
    // bins entirely below `edge` are those with upper bound <= edge
    int below = 0;
    while (below < bins.bin_count() && bins.edges[static_cast<size_t>(below + 1)] <= edge)
        ++below;

    Shape out_shape(v.shape().begin(), v.shape().end() - 1);
    Tensor out(out_shape);
    const int64_t K = bins.bin_count();
    for (int64_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < below; ++j) acc += v[i * K + j];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

double proper_score(ScoreKind kind, const Tensor& q, const Tensor& y) {
    check_same_shape(q, y, "proper_score");
    const int64_t n = q.size();
    double acc = 0.0;
    switch (kind) {
        case ScoreKind::kBrier: {
            for (int64_t i = 0; i < n; ++i) {
                if (y[i] != 0.0f && y[i] != 1.0f)
                    throw ConfigError("brier score expects binary outcomes");
                const double d = static_cast<double>(q[i]) - y[i];
                acc += d * d;
            }
            return acc / static_cast<double>(n);
        }
        case ScoreKind::kBce: {
            for (int64_t i = 0; i < n; ++i) {
                if (y[i] != 0.0f && y[i] != 1.0f)
                    throw ConfigError("bce expects binary outcomes");
                const double qi = std::clamp(static_cast<double>(q[i]), 1e-7, 1.0 - 1e-7);
                acc -= y[i] * std::log(qi) + (1.0 - y[i]) * std::log(1.0 - qi);
            }
            return acc / static_cast<double>(n);
        }
        case ScoreKind::kCe: {
            if (q.rank() != 2) throw ShapeError("ce expects (rows, classes) probabilities");
            const int64_t R = q.dim(0), K = q.dim(1);
            for (int64_t r = 0; r < R; ++r) {
                double row_sum = 0.0;
                for (int64_t k = 0; k < K; ++k) row_sum += y[r * K + k];
                if (std::abs(row_sum - 1.0) > 1e-5)
                    throw ConfigError("ce expects one-hot outcome rows");
                for (int64_t k = 0; k < K; ++k) {
                    if (y[r * K + k] == 0.0f) continue;
                    acc -= y[r * K + k] *
                           std::log(std::max(static_cast<double>(q[r * K + k]), 1e-7));
                }
            }
            return acc / static_cast<double>(R);
        }
    }
    return 0.0;
}

}  // namespace calvid

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calvid/nn.hpp"
#include "calvid/schedule.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

enum class HeadKind { kFsc, kMcc, kCsBc };
enum class ScoreKind { kBrier, kBce, kCe };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);
const char* score_kind_name(ScoreKind k);
ScoreKind score_kind_from_name(const std::string& name);

/// Elementwise |a - b|.
Tensor distance(const Tensor& a, const Tensor& b);

/// 1 where d <= eps (inclusive), else 0. eps must be positive.
Tensor accuracy_mask(const Tensor& d, double eps);

/// Velocity-space threshold implied by a latent-space threshold at the
/// timestep pair (t, t-1):
/// eps_v = eps / |sqrt(abar_t (1-abar_{t-1})) - sqrt(abar_{t-1} (1-abar_t))|.
/// Throws DivergenceError when the denominator is near singular.
double eps_to_eps_v(double eps, int t, const NoiseSchedule& sched);
/// The scaling denominator itself (one-step x-space distance per unit
/// velocity distance).
double velocity_scale(int t, const NoiseSchedule& sched);

/// Ordered distinct velocity-space thresholds. The adaptive construction is
/// 15 points on [0.1,0.3] plus 14 on [0.3,1.0], deduplicated at 0.3 -> 28.
struct ThresholdSet {
    std::vector<double> values;

    static ThresholdSet adaptive();
    static ThresholdSet linear(int count, double lo, double hi);
    int size() const { return static_cast<int>(values.size()); }
};

/// Bin edges {0, eps_1, ..., eps_K, +inf} -> K+1 bins O_i = [edge_i, edge_{i+1}).
struct BinStructure {
    std::vector<double> edges;

    static BinStructure from_thresholds(const ThresholdSet& ts);
    int bin_count() const { return static_cast<int>(edges.size()) - 1; }
    int bin_of(double d) const;
    bool is_edge(double e) const;
};

struct ProbeConfig {
    HeadKind head = HeadKind::kCsBc;
    int frames = 8;
    int lat_h = 8;
    int lat_w = 8;
    int latent_channels = 4;
    int cond_width = 64;  // width of z and c coming from the denoiser

    int blocks = 2;
    int heads = 2;
    int width = 64;
    int mlp_mult = 4;
    int bins = 29;           // MCC classes (K+1)
    double fsc_eps_v = 0.5;  // fixed training scale of the FSC head

    int64_t tokens_per_frame() const { return static_cast<int64_t>(lat_h) * lat_w; }
};

/// Confidence head f over (z, c): two transformer blocks with per-frame
/// spatial attention; one logit per subpatch (FSC/CS-BC) or bins logits per
/// subpatch (MCC). CS-BC additionally receives a sinusoidal embedding of the
/// conditioning threshold added to c.
struct ProbeHead {
    ProbeConfig cfg;
    uint64_t seed = 0;

    Linear input_proj;  // 2*cond_width -> width
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;
    Linear out;  // zero-initialized

    static ProbeHead create(const ProbeConfig& cfg, uint64_t seed);
    void visit(const ParamVisitor& fn);
    int64_t out_dim() const {
        return cfg.head == HeadKind::kMcc ? cfg.latent_channels * cfg.bins : cfg.latent_channels;
    }
};

/// Tape-level logits. `z` has one row per token and `cond` one row per frame
/// covered by those tokens; rows of z must be frame-major. For CS-BC pass the
/// conditioning threshold; for the other heads pass nullopt.
Var probe_logits(const ProbeHead& head, Tape& tape, ParamBinder& bind, Var z, Var cond,
                 std::optional<double> eps_v);

/// Per-subpatch confidence. FSC/CS-BC: sigmoid probabilities with the latent
/// video shape. MCC: softmax simplex with a trailing bin axis.
struct ConfidenceMap {
    HeadKind kind = HeadKind::kCsBc;
    Tensor values;  // (T,h,w,C) or (T,h,w,C,bins)
};

ConfidenceMap probe_forward(const ProbeHead& head, const Tensor& z, const Tensor& cond,
                            std::optional<double> eps_v);

/// Confidence that the distance lands strictly below `edge`: cumulative mass
/// of the bins entirely below it. `edge` must be one of the structure's
/// edges; +inf gives 1, the zero edge gives 0.
Tensor mcc_cumulative_confidence(const ConfidenceMap& simplex, double edge,
                                 const BinStructure& bins);

/// Mean proper score of predictions against outcomes.
/// brier: mean (q-y)^2 with binary y; bce: mean negative log-likelihood with
/// q clamped to [1e-7, 1-1e-7]; ce: q and y are (rows, K) probability /
/// one-hot matrices.
double proper_score(ScoreKind kind, const Tensor& q, const Tensor& y);

}  // namespace calvid

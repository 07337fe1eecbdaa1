#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calvid/calibration.hpp"
#include "calvid/checkpoint.hpp"
#include "calvid/config.hpp"
#include "calvid/world.hpp"

namespace calvid {

struct TrainedModels {
    CodecParams codec;
    Denoiser model;
    ProbeHead probe;
};

enum class ProbeMode {
    kLearned,
    /// Bypasses the learned head: confidence is the empirical accuracy rate
    /// of the (threshold, timestep) stratum, counted on the evaluated pairs.
    kOracle,
};

struct EvalResult {
    std::string dataset_tag;
    std::vector<double> thresholds;
    std::vector<ReliabilityReport> per_threshold;
    ReliabilityReport aggregate;  // pooled pairs across thresholds
    double mean_ece = 0.0;        // average of per-threshold ECEs
    double mean_mce = 0.0;
    int64_t pair_count = 0;

    double mean_confidence = 0.0;      // at heatmap_eps_v on the one-step path
    double mean_conf_low_thr = 0.0;    // at the smallest eval threshold
    double mean_conf_high_thr = 0.0;   // at the largest eval threshold

    bool has_correlation = false;
    CorrelationResult correlation;  // confidence vs per-element rollout error
};

struct OodEvalResult {
    EvalResult id;
    std::vector<EvalResult> per_axis;
    ReliabilityReport pooled_ood;  // pooled over all OOD axes
    double pooled_ood_ece = 0.0;
    double pooled_id_ece = 0.0;
};

struct AblationResult {
    std::string which;
    std::string label_a, label_b;
    EvalResult a, b;
    double delta_ece = 0.0;  // |mean_ece_a - mean_ece_b|
    double delta_mce = 0.0;
};

// run-directory layout
std::string nominal_data_dir(const RunConfig& cfg);
std::string ood_data_dir(const RunConfig& cfg, OodAxis axis);
std::string checkpoint_prefix(const RunConfig& cfg, const std::string& kind);

/// Generates the nominal train/test dataset plus the five OOD datasets.
void pipeline_gen_data(const RunConfig& cfg, bool overwrite);

CodecParams pipeline_train_codec(const RunConfig& cfg);

/// Trains the velocity model and probe jointly on the nominal train split;
/// requires the codec checkpoint. Saves checkpoints and the training log
/// under run_dir (defaults to cfg.out_dir; ablation variants pass their own).
TrainedModels pipeline_train(const RunConfig& cfg, const std::string& run_dir = "");

TrainedModels load_models(const RunConfig& cfg);

/// Shared evaluation path (used identically by calibration and OOD
/// evaluation): one-step-velocity calibration pairs per threshold plus,
/// optionally, full DDIM rollouts for the error correlation.
EvalResult evaluate_dataset(const RunConfig& cfg, const TrainedModels& models,
                            const std::string& data_dir, const std::string& tag,
                            ProbeMode mode, bool with_rollouts);

/// Calibration pipeline on the nominal test split; writes reports, the CSV
/// summary and the reliability SVG under <out>/eval_<tag>/.
EvalResult pipeline_eval(const RunConfig& cfg, ProbeMode mode = ProbeMode::kLearned);

OodEvalResult pipeline_eval_ood(const RunConfig& cfg);

/// Trains/evaluates the ablation pair with shared seeds. `which` is one of
/// score_rule, diffusion_forcing, stop_gradient. When `reuse_main` is set
/// and a variant equals the main run configuration, its checkpoints are
/// loaded instead of retrained.
AblationResult pipeline_ablate(const RunConfig& cfg, const std::string& which, bool reuse_main);

/// Renders ground-truth / generated / confidence / composite / error frames
/// for one test episode into <out>/render/.
void pipeline_render(const RunConfig& cfg, int episode_index);

void write_eval_outputs(const RunConfig& cfg, const EvalResult& result,
                        const std::string& subdir);

}  // namespace calvid

#pragma once

#include <cstdint>
#include <string>

#include "calvid/codec.hpp"
#include "calvid/denoiser.hpp"
#include "calvid/probe.hpp"
#include "calvid/trainer.hpp"
#include "calvid/world.hpp"

namespace calvid {

/// Everything a run needs; every field has a default and the full config is
/// stored verbatim next to every output for reproducibility.
struct RunConfig {
    uint64_t seed = 17;
    std::string out_dir = "runs/default";

    WorldConfig world;
    int train_episodes = 2000;
    int test_episodes = 200;
    int ood_episodes_per_axis = 10;

    CodecConfig codec;
    int codec_epochs = 3;
    double codec_lr = 0.15;
    int codec_max_frames = 4000;  // subsample cap for codec training

    DenoiserConfig model;
    ProbeConfig probe;
    JointTrainConfig train;

    // evaluation protocol
    int eval_threshold_count = 10;
    double eval_threshold_lo = 0.1;
    double eval_threshold_hi = 1.0;
    int reliability_bins = 20;
    int timestep_draws = 2;      // calibration passes per test episode
    int rollout_episodes = 50;   // full DDIM rollouts for correlation/heatmaps
    int correlation_samples = 4000;
    double heatmap_eps_v = 0.5;  // threshold used for heatmaps, mean
                                 // confidence and the error correlation
    double heatmap_opacity = 0.45;

    /// Re-derives the geometry fields that follow from world + codec.
    void sync_geometry();
    void validate() const;
};

RunConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const RunConfig& cfg);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace calvid

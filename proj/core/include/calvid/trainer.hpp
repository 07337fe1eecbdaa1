#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calvid/denoiser.hpp"
#include "calvid/diffusion.hpp"
#include "calvid/probe.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

struct JointTrainConfig {
    int steps = 1500;
    int batch_episodes = 2;
    double lr = 0.05;
    double clip_norm = 1.0;
    ScoreKind score = ScoreKind::kBrier;
    bool diffusion_forcing = true;
    bool stop_gradient = true;
    int csbc_draws = 4;  // thresholds drawn per iteration for the CS-BC head
    uint64_t seed = 0;
    int log_every = 25;
    ThresholdSet thresholds = ThresholdSet::adaptive();

    void validate(HeadKind head) const;
};

struct TrainLogRow {
    int64_t step = 0;
    double loss_theta = 0.0;
    double loss_phi = 0.0;
    double lr = 0.0;
    /// L2 norm of d(loss_phi)/d(denoiser params); exactly zero when the
    /// stop-gradient is active. Sampled sparsely (-1 when not measured).
    double phi_grad_on_theta = -1.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    double mean_loss_theta_tail = 0.0;  // mean over the last 10% of steps
    double mean_loss_phi_tail = 0.0;
};

/// Joint training of the velocity model and confidence head with the summed
/// loss. Latents must already be on the normalized scale the denoiser
/// records. Episodes are (T,h,w,C) latent videos with (T,m) action tracks.
TrainResult train_joint(Denoiser& model, ProbeHead& head,
                        const std::vector<Tensor>& latents,
                        const std::vector<Tensor>& actions, const JointTrainConfig& cfg);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace calvid

#pragma once

#include <vector>

#include "calvid/rng.hpp"
#include "calvid/schedule.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

/// Latent videos are rank-4 tensors (frames, lat_h, lat_w, lat_c); the first
/// extent is the frame axis that per-frame timesteps index into.
using LatentVideo = Tensor;

enum class TimestepMode { kShared, kDiffusionForcing };

/// Per-frame timestep draw: one shared t for all frames, or independent
/// uniform draws per frame. Values lie in [1, schedule_steps].
std::vector<int> sample_timesteps(TimestepMode mode, int frames, int schedule_steps, Rng& rng);

/// Closed-form forward process per frame:
/// x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise. t = 0 is the clean
/// boundary (returns x0 exactly).
LatentVideo forward_noise(const LatentVideo& x0, const std::vector<int>& t,
                          const Tensor& noise, const NoiseSchedule& sched);

/// Velocity regression target: v* = sqrt(abar_t) * noise - sqrt(1 - abar_t) * x0.
/// Satisfies sqrt(abar_t) * x_t - sqrt(1 - abar_t) * v* == x0.
Tensor velocity_target(const LatentVideo& x0, const Tensor& noise,
                       const std::vector<int>& t, const NoiseSchedule& sched);

/// Clean-latent estimate at timestep t from the predicted velocity.
Tensor predict_x0(const LatentVideo& x_t, const Tensor& v, int t, const NoiseSchedule& sched);

/// One deterministic reverse step from timestep t to t_prev < t:
/// x_prev = sqrt(abar_prev) * x0_est + sqrt(1-abar_prev) * (x_t - sqrt(abar_t)*x0_est)/sqrt(1-abar_t).
LatentVideo ddim_step(const LatentVideo& x_t, const Tensor& v_hat, int t, int t_prev,
                      const NoiseSchedule& sched);

/// Mean squared deviation over all elements (64-bit accumulation).
double diffusion_loss(const Tensor& v_hat, const Tensor& v_star);

}  // namespace calvid

#pragma once

#include <cstdint>
#include <vector>

#include "calvid/diffusion.hpp"
#include "calvid/nn.hpp"
#include "calvid/schedule.hpp"
#include "calvid/tensor.hpp"

namespace calvid {

struct DenoiserConfig {
    int frames = 8;
    int lat_h = 8;
    int lat_w = 8;
    int latent_channels = 4;
    int action_dim = 2;

    int blocks = 3;
    int heads = 4;
    int width = 64;
    int mlp_mult = 4;

    int schedule_steps = 50;  // forward-process length T_d
    double beta_start = 0.01;
    double beta_end = 0.30;
    int reverse_steps = 10;  // DDIM reverse chain length at inference

    int64_t tokens_per_frame() const { return static_cast<int64_t>(lat_h) * lat_w; }
    int64_t tokens() const { return tokens_per_frame() * frames; }
};

/// Velocity-predicting transformer over flattened latent subpatch tokens,
/// conditioned on summed action and timestep embeddings.
struct Denoiser {
    DenoiserConfig cfg;
    NoiseSchedule sched;
    uint64_t seed = 0;
    int64_t train_steps = 0;
    /// Latents are shifted/scaled to a unit-ish range before diffusion so
    /// thresholds live on a [0,1]-comparable scale; recorded at training
    /// time: x_norm = (x - latent_shift) / latent_scale.
    float latent_scale = 1.0f;
    float latent_shift = 0.0f;

    Linear token_in;      // C_l -> width
    Tensor pos_emb;       // (tokens, width)
    Linear act1, act2;    // action MLP
    std::vector<TransformerBlock> blocks;
    LayerNorm final_ln;
    Linear out;           // width -> C_l, zero-initialized

    static Denoiser create(const DenoiserConfig& cfg, uint64_t seed);
    void visit(const ParamVisitor& fn);
};

/// Tape-level forward pass; exposes the pieces joint training needs.
struct DenoiserForward {
    Var v_tokens;  // (T*S, C_l) predicted velocity per token
    Var z;         // (T*S, width) penultimate features
    Var cond;      // (T, width) action+timestep embedding
};

DenoiserForward denoiser_forward(const Denoiser& model, Tape& tape, ParamBinder& bind,
                                 const Tensor& x_t, const Tensor& actions,
                                 const std::vector<int>& t);

struct VelocityPrediction {
    Tensor v_hat;  // (T, h, w, C_l)
    Tensor z;      // (T*S, width)
    Tensor cond;   // (T, width)
};

/// Deterministic no-grad forward. Errors on geometry mismatch.
VelocityPrediction predict_velocity(const Denoiser& model, const Tensor& x_t,
                                    const Tensor& actions, const std::vector<int>& t);

struct SampleResult {
    LatentVideo x_hat;
    // features from the final (lowest-timestep) reverse step, for the probe
    Tensor z_final;
    Tensor cond_final;
    std::vector<int> t_final;
};

/// Deterministic DDIM rollout from seeded Gaussian noise, conditioned on the
/// clean first-frame latent (clamped at every reverse step) and the action
/// trajectory. `steps` <= schedule_steps; the reverse timesteps are an evenly
/// spaced subsequence ending at 0.
SampleResult sample(const Denoiser& model, const Tensor& first_frame_latent,
                    const Tensor& actions, int steps, uint64_t noise_seed);

/// The evenly spaced descending timestep subsequence used by sample().
std::vector<int> reverse_timesteps(int schedule_steps, int steps);

}  // namespace calvid

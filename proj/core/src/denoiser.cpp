#include "calvid/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "calvid/errors.hpp"
#include "calvid/rng.hpp"

namespace calvid {

Denoiser Denoiser::create(const DenoiserConfig& cfg, uint64_t seed) {
    Denoiser m;
    m.cfg = cfg;
    m.seed = seed;
    m.sched = NoiseSchedule::linear(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
    Rng rng(seed, 21);
    m.token_in.init(rng, cfg.latent_channels, cfg.width);
    m.pos_emb = rng.normal_tensor({m.cfg.tokens(), cfg.width});
    for (int64_t i = 0; i < m.pos_emb.size(); ++i) m.pos_emb[i] *= 0.02f;
    m.act1.init(rng, cfg.action_dim, cfg.width);
    m.act2.init(rng, cfg.width, cfg.width);
    m.blocks.resize(static_cast<size_t>(cfg.blocks));
    for (auto& b : m.blocks) b.init(rng, cfg.width, cfg.heads, cfg.width * cfg.mlp_mult);
    m.final_ln.init(cfg.width);
    m.out.init_zero(cfg.width, cfg.latent_channels);
    return m;
}

void Denoiser::visit(const ParamVisitor& fn) {
    token_in.visit("token_in", fn);
    fn("pos_emb", pos_emb);
    act1.visit("act1", fn);
    act2.visit("act2", fn);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].visit("blocks." + std::to_string(i), fn);
    final_ln.visit("final_ln", fn);
    out.visit("out", fn);
}

namespace {

void check_geometry(const Denoiser& m, const Tensor& x_t, const Tensor& actions,
                    const std::vector<int>& t) {
    const auto& c = m.cfg;
    if (x_t.rank() != 4 || x_t.dim(0) != c.frames || x_t.dim(1) != c.lat_h ||
        x_t.dim(2) != c.lat_w || x_t.dim(3) != c.latent_channels)
        throw ShapeError("latent geometry mismatch: got " + shape_str(x_t.shape()));
    if (actions.rank() != 2 || actions.dim(0) != c.frames || actions.dim(1) != c.action_dim)
        throw ShapeError("action geometry mismatch: got " + shape_str(actions.shape()));
    if (static_cast<int>(t.size()) != c.frames)
        throw ShapeError("per-frame timestep count mismatch");
    for (int v : t)
        if (v < 0 || v > c.schedule_steps) throw ShapeError("timestep out of range");
}

}  // namespace

DenoiserForward denoiser_forward(const Denoiser& model, Tape& tape, ParamBinder& bind,
                                 const Tensor& x_t, const Tensor& actions,
                                 const std::vector<int>& t) {
    check_geometry(model, x_t, actions, t);
    auto& m = const_cast<Denoiser&>(model);
    const auto& cfg = model.cfg;
    const int64_t S = cfg.tokens_per_frame();

    Var tokens = tape.constant(x_t.reshaped({cfg.tokens(), cfg.latent_channels}));
    Var h = add(m.token_in.apply(bind, tokens), bind(m.pos_emb));

    Var act_in = tape.constant(actions);
    Var act_emb = m.act2.apply(bind, silu(m.act1.apply(bind, act_in)));
    Var cond = add(act_emb, tape.constant(timestep_embedding(t, cfg.width)));

    h = add(h, repeat_interleave_rows(cond, S));
    for (const auto& block : m.blocks) h = block.apply(bind, h, 0);
    Var z = m.final_ln.apply(bind, h);
    Var v = m.out.apply(bind, z);
    return DenoiserForward{v, z, cond};
}

VelocityPrediction predict_velocity(const Denoiser& model, const Tensor& x_t,
                                    const Tensor& actions, const std::vector<int>& t) {
    Tape tape(false);
    ParamBinder bind(tape, false);
    DenoiserForward fwd = denoiser_forward(model, tape, bind, x_t, actions, t);
    const auto& cfg = model.cfg;
    return VelocityPrediction{
        fwd.v_tokens.value().reshaped({cfg.frames, cfg.lat_h, cfg.lat_w, cfg.latent_channels}),
        fwd.z.value(), fwd.cond.value()};
}

std::vector<int> reverse_timesteps(int schedule_steps, int steps) {
    if (steps < 1) throw ConfigError("sampling needs at least one reverse step");
    if (steps > schedule_steps) throw ConfigError("reverse steps exceed schedule length");
    std::vector<int> taus(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        // descending, evenly spaced, ending at schedule_steps/steps >= 1
        taus[static_cast<size_t>(i)] = static_cast<int>(std::lround(
            static_cast<double>(schedule_steps) * (steps - i) / static_cast<double>(steps)));
        taus[static_cast<size_t>(i)] = std::max(1, taus[static_cast<size_t>(i)]);
    }
    return taus;
}

SampleResult sample(const Denoiser& model, const Tensor& first_frame_latent,
                    const Tensor& actions, int steps, uint64_t noise_seed) {
    const auto& cfg = model.cfg;
    Tensor clean = first_frame_latent;
    if (clean.rank() == 4 && clean.dim(0) == 1)
        clean = clean.reshaped({clean.dim(1), clean.dim(2), clean.dim(3)});
    if (clean.rank() != 3 || clean.dim(0) != cfg.lat_h || clean.dim(1) != cfg.lat_w ||
        clean.dim(2) != cfg.latent_channels)
        throw ShapeError("first-frame latent geometry mismatch");

    const std::vector<int> taus = reverse_timesteps(cfg.schedule_steps, steps);
    const int64_t frame_elems = cfg.tokens_per_frame() * cfg.latent_channels;

    Rng rng(noise_seed, 31);
    Tensor x = rng.normal_tensor({cfg.frames, cfg.lat_h, cfg.lat_w, cfg.latent_channels});
    auto clamp_first = [&](Tensor& cur) {
        std::copy(clean.data(), clean.data() + frame_elems, cur.data());
    };
    clamp_first(x);

    SampleResult result;
    for (size_t i = 0; i < taus.size(); ++i) {
        const int t_cur = taus[i];
        const int t_prev = (i + 1 < taus.size()) ? taus[i + 1] : 0;
        std::vector<int> per_frame(static_cast<size_t>(cfg.frames), t_cur);
        per_frame[0] = 0;  // conditioning frame stays clean
        VelocityPrediction pred = predict_velocity(model, x, actions, per_frame);
        if (i + 1 == taus.size()) {
            result.z_final = pred.z;
            result.cond_final = pred.cond;
            result.t_final = per_frame;
        }
        x = ddim_step(x, pred.v_hat, t_cur, t_prev, model.sched);
        clamp_first(x);
    }
    result.x_hat = std::move(x);
    return result;
}

}  // namespace calvid

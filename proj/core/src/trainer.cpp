#include "calvid/trainer.hpp"

#include <cmath>
#include <fstream>

#include "calvid/autograd.hpp"
#include "calvid/errors.hpp"
#include "calvid/optim.hpp"
#include "calvid/rng.hpp"

namespace calvid {

void JointTrainConfig::validate(HeadKind head) const {
    if (steps < 1 || batch_episodes < 1) throw ConfigError("bad training step/batch counts");
    if (score == ScoreKind::kCe && head != HeadKind::kMcc)
        throw ConfigError("cross-entropy requires the MCC head");
    if (head == HeadKind::kMcc && score != ScoreKind::kCe)
        throw ConfigError("the MCC head trains with cross-entropy");
    if (head == HeadKind::kCsBc && csbc_draws < 1)
        throw ConfigError("CS-BC needs at least one threshold draw per iteration");
    if (thresholds.values.empty()) throw ConfigError("empty threshold set");
}

namespace {

/// One-hot bin labels (rows = subpatches) for the MCC head.
Tensor bin_onehot(const Tensor& d_rows, const BinStructure& bins) {
    const int64_t n = d_rows.size();
    const int64_t K = bins.bin_count();
    Tensor out({n, K});
    for (int64_t i = 0; i < n; ++i)
        out[i * K + bins.bin_of(static_cast<double>(d_rows[i]))] = 1.0f;
    return out;
}

Var binary_score(ScoreKind kind, Var q, Var y) {
    return kind == ScoreKind::kBrier ? brier_loss(q, y) : bce_loss(q, y);
}

struct EpisodeLosses {
    Var theta;
    Var phi;
};

/// Forward + loss construction for a single episode on the given tape.
EpisodeLosses episode_losses(Denoiser& model, ProbeHead& head, Tape& tape, ParamBinder& bind,
                             const Tensor& x0, const Tensor& acts, const JointTrainConfig& cfg,
                             Rng& rng, const BinStructure& bins) {
    const auto& mc = model.cfg;
    const int64_t S = mc.tokens_per_frame();
    const int64_t tokens = mc.tokens();

    std::vector<int> t = sample_timesteps(
        cfg.diffusion_forcing ? TimestepMode::kDiffusionForcing : TimestepMode::kShared,
        mc.frames, mc.schedule_steps, rng);
    t[0] = 0;  // conditioning frame stays clean, matching the sampler

    Tensor noise = rng.normal_tensor(x0.shape());
    Tensor x_t = forward_noise(x0, t, noise, model.sched);
    Tensor v_star = velocity_target(x0, noise, t, model.sched);

    DenoiserForward fwd = denoiser_forward(model, tape, bind, x_t, acts, t);

    // frame 0 carries no diffusion target; losses cover frames 1..T-1
    Var v_pred = slice_rows(fwd.v_tokens, S, tokens);
    Tensor v_star_rows = v_star.reshaped({tokens, mc.latent_channels});
    Tensor v_star_tail({tokens - S, mc.latent_channels});
    std::copy(v_star_rows.data() + S * mc.latent_channels, v_star_rows.data() + v_star_rows.size(),
              v_star_tail.data());
    Var loss_theta = mse_loss(v_pred, tape.constant(v_star_tail));

    // probe inputs: features and conditioning for frames 1..T-1, with the
    // stop-gradient between the two models unless ablated
    Var z_tail = slice_rows(fwd.z, S, tokens);
    Var c_tail = slice_rows(fwd.cond, 1, mc.frames);
    if (cfg.stop_gradient) {
        z_tail = stop_gradient(z_tail);
        c_tail = stop_gradient(c_tail);
    }

    // labels compare the model's own predicted velocity with the target
    Tensor d = distance(v_pred.value(), v_star_tail);

    Var loss_phi{};
    switch (head.cfg.head) {
        case HeadKind::kFsc: {
            Var q = sigmoid(probe_logits(head, tape, bind, z_tail, c_tail, std::nullopt));
            Tensor y = accuracy_mask(d, head.cfg.fsc_eps_v);
            loss_phi = binary_score(cfg.score, q, tape.constant(y));
            break;
        }
        case HeadKind::kMcc: {
            Var logits = probe_logits(head, tape, bind, z_tail, c_tail, std::nullopt);
            Var rows = reshape(logits, {(tokens - S) * mc.latent_channels, head.cfg.bins});
            Var probs = softmax_rows(rows);
            Tensor y = bin_onehot(d.reshaped({d.size()}), bins);
            loss_phi = ce_loss(probs, tape.constant(y));
            break;
        }
        case HeadKind::kCsBc: {
            for (int draw = 0; draw < cfg.csbc_draws; ++draw) {
                const double eps_v =
                    cfg.thresholds
                        .values[static_cast<size_t>(rng.uniform_int(0, cfg.thresholds.size() - 1))];
                Var q = sigmoid(probe_logits(head, tape, bind, z_tail, c_tail, eps_v));
                Tensor y = accuracy_mask(d, eps_v);
                Var part = binary_score(cfg.score, q, tape.constant(y));
                loss_phi = loss_phi.valid() ? add(loss_phi, part) : part;
            }
            loss_phi = scale(loss_phi, 1.0f / static_cast<float>(cfg.csbc_draws));
            break;
        }
    }
    return EpisodeLosses{loss_theta, loss_phi};
}

/// Norm of the probe loss gradient on the denoiser parameters alone,
/// measured on a throwaway tape.
double measure_phi_grad_on_theta(Denoiser& model, ProbeHead& head, const Tensor& x0,
                                 const Tensor& acts, const JointTrainConfig& cfg, uint64_t seed,
                                 const BinStructure& bins) {
    Tape tape;
    ParamBinder bind(tape);
    std::vector<Var> theta_vars;
    model.visit([&](const std::string&, Tensor& p) { theta_vars.push_back(bind(p)); });
    Rng rng(seed, 77);
    EpisodeLosses losses =
        episode_losses(model, head, tape, bind, x0, acts, cfg, rng, bins);
    auto grads = tape.grad(losses.phi, theta_vars);
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (int64_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
    return std::sqrt(sq);
}

}  // namespace

TrainResult train_joint(Denoiser& model, ProbeHead& head, const std::vector<Tensor>& latents,
                        const std::vector<Tensor>& actions, const JointTrainConfig& cfg) {
    cfg.validate(head.cfg.head);
    if (latents.empty() || latents.size() != actions.size())
        throw ConfigError("joint training needs matching latent/action lists");

    const BinStructure bins = BinStructure::from_thresholds(cfg.thresholds);
    CosineSchedule sched{cfg.lr, cfg.steps};
    Rng rng(cfg.seed, 51);

    TrainResult result;
    const int64_t n = static_cast<int64_t>(latents.size());
    double tail_theta = 0.0, tail_phi = 0.0;
    int64_t tail_count = 0;
    const int64_t tail_start = cfg.steps - std::max(1, cfg.steps / 10);

    for (int step = 0; step < cfg.steps; ++step) {
        Tape tape;
        ParamBinder bind(tape);
        Var loss_theta{}, loss_phi{};
        int64_t first_idx = -1;
        for (int b = 0; b < cfg.batch_episodes; ++b) {
            const int64_t idx = rng.uniform_int(0, n - 1);
            if (first_idx < 0) first_idx = idx;
            EpisodeLosses ep = episode_losses(model, head, tape, bind,
                                              latents[static_cast<size_t>(idx)],
                                              actions[static_cast<size_t>(idx)], cfg, rng, bins);
            loss_theta = loss_theta.valid() ? add(loss_theta, ep.theta) : ep.theta;
            loss_phi = loss_phi.valid() ? add(loss_phi, ep.phi) : ep.phi;
        }
        const float inv_b = 1.0f / static_cast<float>(cfg.batch_episodes);
        loss_theta = scale(loss_theta, inv_b);
        loss_phi = scale(loss_phi, inv_b);
        Var loss = add(loss_theta, loss_phi);

        const double lt = loss_theta.value()[0];
        const double lp = loss_phi.value()[0];
        if (!std::isfinite(lt) || !std::isfinite(lp))
            throw DivergenceError("joint training loss diverged at step " + std::to_string(step));

        auto grads = tape.grad(loss, bind.vars());
        clip_grad_norm(grads, cfg.clip_norm);
        const double lr_now = sched.lr(step);
        sgd_step(bind.params(), grads, lr_now);
        model.train_steps += 1;

        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            TrainLogRow row{step, lt, lp, lr_now, -1.0};
            if (step == 0 || step + 1 == cfg.steps)
                row.phi_grad_on_theta = measure_phi_grad_on_theta(
                    model, head, latents[static_cast<size_t>(first_idx)],
                    actions[static_cast<size_t>(first_idx)], cfg,
                    cfg.seed + static_cast<uint64_t>(step), bins);
            result.log.push_back(row);
        }
        if (step >= tail_start) {
            tail_theta += lt;
            tail_phi += lp;
            ++tail_count;
        }
    }
    result.mean_loss_theta_tail = tail_theta / static_cast<double>(std::max<int64_t>(1, tail_count));
    result.mean_loss_phi_tail = tail_phi / static_cast<double>(std::max<int64_t>(1, tail_count));
    return result;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
    std::ofstream os(path);
    if (!os) throw MissingArtifactError("cannot write training log: " + path);
    os << "step,loss_theta,loss_phi,lr,phi_grad_on_theta\n";
    for (const auto& r : log)
        os << r.step << "," << r.loss_theta << "," << r.loss_phi << "," << r.lr << ","
           << r.phi_grad_on_theta << "\n";
}

}  // namespace calvid

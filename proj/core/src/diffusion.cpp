#include "calvid/diffusion.hpp"

#include <cmath>

namespace calvid {

namespace {

int64_t frame_stride(const Tensor& x) {
    if (x.rank() < 1 || x.dim(0) < 1) throw ShapeError("latent video needs a frame axis");
    return x.size() / x.dim(0);
}

void check_frames(const Tensor& x, const std::vector<int>& t, const NoiseSchedule& sched) {
    if (static_cast<int64_t>(t.size()) != x.dim(0))
        throw ShapeError("per-frame timestep count does not match frame count");
    for (int v : t)
        if (v < 0 || v > sched.steps) throw ShapeError("timestep out of range");
}

}  // namespace

std::vector<int> sample_timesteps(TimestepMode mode, int frames, int schedule_steps, Rng& rng) {
    std::vector<int> t(static_cast<size_t>(frames));
    if (mode == TimestepMode::kShared) {
        const int shared = static_cast<int>(rng.uniform_int(1, schedule_steps));
        for (auto& v : t) v = shared;
    } else {
        for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, schedule_steps));
    }
    return t;
}

LatentVideo forward_noise(const LatentVideo& x0, const std::vector<int>& t,
                          const Tensor& noise, const NoiseSchedule& sched) {
    check_same_shape(x0, noise, "forward_noise");
    check_frames(x0, t, sched);
    const int64_t stride = frame_stride(x0);
    Tensor out(x0.shape());
    for (int64_t f = 0; f < x0.dim(0); ++f) {
        const double abar = sched.abar(t[static_cast<size_t>(f)]);
        const float a = static_cast<float>(std::sqrt(abar));
        const float s = static_cast<float>(std::sqrt(1.0 - abar));
        const float* px = x0.data() + f * stride;
        const float* pn = noise.data() + f * stride;
        float* po = out.data() + f * stride;
        for (int64_t i = 0; i < stride; ++i) po[i] = a * px[i] + s * pn[i];
    }
    return out;
}

Tensor velocity_target(const LatentVideo& x0, const Tensor& noise,
                       const std::vector<int>& t, const NoiseSchedule& sched) {
    check_same_shape(x0, noise, "velocity_target");
    check_frames(x0, t, sched);
    const int64_t stride = frame_stride(x0);
    Tensor out(x0.shape());
    for (int64_t f = 0; f < x0.dim(0); ++f) {
        const double abar = sched.abar(t[static_cast<size_t>(f)]);
        const float a = static_cast<float>(std::sqrt(abar));
        const float s = static_cast<float>(std::sqrt(1.0 - abar));
        const float* px = x0.data() + f * stride;
        const float* pn = noise.data() + f * stride;
        float* po = out.data() + f * stride;
        for (int64_t i = 0; i < stride; ++i) po[i] = a * pn[i] - s * px[i];
    }
    return out;
}

Tensor predict_x0(const LatentVideo& x_t, const Tensor& v, int t, const NoiseSchedule& sched) {
    check_same_shape(x_t, v, "predict_x0");
    const double abar = sched.abar(t);
    const float a = static_cast<float>(std::sqrt(abar));
    const float s = static_cast<float>(std::sqrt(1.0 - abar));
    Tensor out(x_t.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x_t[i] - s * v[i];
    return out;
}

LatentVideo ddim_step(const LatentVideo& x_t, const Tensor& v_hat, int t, int t_prev,
                      const NoiseSchedule& sched) {
    check_same_shape(x_t, v_hat, "ddim_step");
    if (t < 1) throw ShapeError("ddim_step requires t >= 1");
    if (!(t_prev >= 0 && t_prev < t)) throw ShapeError("ddim_step requires 0 <= t_prev < t");
    const double abar_t = sched.abar(t);
    const double abar_p = sched.abar(t_prev);
    const double one_minus = 1.0 - abar_t;
    if (one_minus < 1e-12) throw DivergenceError("ddim_step: abar_t == 1 at t >= 1");
    const float sa_t = static_cast<float>(std::sqrt(abar_t));
    const float sa_p = static_cast<float>(std::sqrt(abar_p));
    const float s1m_t = static_cast<float>(std::sqrt(one_minus));
    const float s1m_p = static_cast<float>(std::sqrt(1.0 - abar_p));
    Tensor out(x_t.shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        const float x0_est = sa_t * x_t[i] - s1m_t * v_hat[i];
        const float eps_dir = (x_t[i] - sa_t * x0_est) / s1m_t;
        out[i] = sa_p * x0_est + s1m_p * eps_dir;
    }
    return out;
}

double diffusion_loss(const Tensor& v_hat, const Tensor& v_star) {
    check_same_shape(v_hat, v_star, "diffusion_loss");
    double acc = 0.0;
    for (int64_t i = 0; i < v_hat.size(); ++i) {
        const double d = static_cast<double>(v_hat[i]) - v_star[i];
        acc += d * d;
    }
    return acc / static_cast<double>(v_hat.size());
}

}  // namespace calvid

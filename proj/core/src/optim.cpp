#include "calvid/optim.hpp"

#include <cmath>

#include "calvid/errors.hpp"

namespace calvid {

double CosineSchedule::lr(int64_t step) const {
    if (step <= 0) return base;
    if (step >= total_steps) return 0.0;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size())
        throw ShapeError("sgd_step: param/grad count mismatch");
    const float f = static_cast<float>(lr);
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& g = grads[p];
        check_same_shape(param, g, "sgd_step");
        float* pv = param.data();
        const float* gv = g.data();
        for (int64_t i = 0; i < param.size(); ++i) pv[i] -= f * gv[i];
    }
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (int64_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float s = static_cast<float>(max_norm / norm);
        for (Tensor& g : grads)
            for (int64_t i = 0; i < g.size(); ++i) g[i] *= s;
    }
    return norm;
}

}  // namespace calvid

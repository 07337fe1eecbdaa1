#pragma once

#include <vector>

#include "calvid/tensor.hpp"

namespace calvid {

/// Cosine-annealed learning rate: lr(s) = base * 0.5 * (1 + cos(pi * s / total)).
/// lr(0) == base, lr(total/2) == base/2, lr(total) == 0.
struct CosineSchedule {
    double base = 0.1;
    int64_t total_steps = 1;

    double lr(int64_t step) const;
};

/// param <- param - lr * grad, elementwise. Shapes must match.
void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr);

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace calvid

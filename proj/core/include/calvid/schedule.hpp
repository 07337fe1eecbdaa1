#pragma once

#include <vector>

#include "calvid/errors.hpp"

namespace calvid {

/// Diffusion noise schedule: beta_t for t=1..steps, alpha_t = 1-beta_t and
/// alpha_bar_t their running product with alpha_bar_0 == 1.
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta;       // beta[t-1], t in 1..steps
    std::vector<double> alpha_bar;  // alpha_bar[t], t in 0..steps

    static NoiseSchedule linear(int steps, double beta_start, double beta_end);

    double abar(int t) const {
        if (t < 0 || t > steps) throw ShapeError("timestep out of schedule range");
        return alpha_bar[static_cast<size_t>(t)];
    }
    double alpha(int t) const {
        if (t < 1 || t > steps) throw ShapeError("timestep out of schedule range");
        return 1.0 - beta[static_cast<size_t>(t - 1)];
    }
};

}  // namespace calvid

#include "calvid/schedule.hpp"

namespace calvid {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ShapeError("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw ShapeError("betas must satisfy 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<size_t>(steps));
    s.alpha_bar.resize(static_cast<size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double frac = (steps == 1) ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<size_t>(t - 1)] = b;
        s.alpha_bar[static_cast<size_t>(t)] = s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - b);
    }
    return s;
}

}  // namespace calvid

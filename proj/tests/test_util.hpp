#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "calvid/tensor.hpp"

namespace testutil {

/// Central finite differences of a scalar-valued function of a parameter
/// list. Independent of the tape: only re-evaluates the forward function.
inline std::vector<calvid::Tensor> finite_diff(
    const std::function<double(const std::vector<calvid::Tensor>&)>& f,
    std::vector<calvid::Tensor> params, double h) {
    std::vector<calvid::Tensor> grads;
    grads.reserve(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
        calvid::Tensor g(params[p].shape());
        for (int64_t i = 0; i < params[p].size(); ++i) {
            const float keep = params[p][i];
            params[p][i] = static_cast<float>(keep + h);
            const double up = f(params);
            params[p][i] = static_cast<float>(keep - h);
            const double down = f(params);
            params[p][i] = keep;
            g[i] = static_cast<float>((up - down) / (2.0 * h));
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

inline double l2norm(const std::vector<calvid::Tensor>& ts) {
    double acc = 0.0;
    for (const auto& t : ts)
        for (int64_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]) * t[i];
    return std::sqrt(acc);
}

/// || a - b ||_2 / max(||b||_2, floor)
inline double rel_error(const std::vector<calvid::Tensor>& a, const std::vector<calvid::Tensor>& b,
                        double floor = 1e-8) {
    double acc = 0.0;
    for (size_t p = 0; p < a.size(); ++p)
        for (int64_t i = 0; i < a[p].size(); ++i) {
            const double d = static_cast<double>(a[p][i]) - b[p][i];
            acc += d * d;
        }
    return std::sqrt(acc) / std::max(l2norm(b), floor);
}

}  // namespace testutil

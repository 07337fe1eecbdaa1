#include "calvid/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "calvid/errors.hpp"

namespace calvid {

void ReliabilityReport::recompute() {
    n = 0;
    for (const auto& b : bins) n += b.count;
    ece = 0.0;
    mce = 0.0;
    if (n == 0) return;
    for (int m = 0; m < num_bins; ++m) {
        if (!bins[static_cast<size_t>(m)].count) continue;
        const double gap = std::abs(acc(m) - conf(m));
        ece += static_cast<double>(bins[static_cast<size_t>(m)].count) / n * gap;
        mce = std::max(mce, gap);
    }
}

ReliabilityReport reliability(const std::vector<PredPair>& pairs, int num_bins) {
    if (pairs.empty()) throw ConfigError("reliability needs at least one pair");
    if (num_bins < 1) throw ConfigError("reliability needs at least one bin");
    ReliabilityReport r;
    r.num_bins = num_bins;
    r.bins.assign(static_cast<size_t>(num_bins), {});
    for (const PredPair& p : pairs) {
        if (!(p.q >= 0.0f && p.q <= 1.0f))
            throw ConfigError("confidence outside [0,1]: " + std::to_string(p.q));
        if (p.y != 0 && p.y != 1) throw ConfigError("outcome must be 0 or 1");
        const int m = std::min(num_bins - 1, static_cast<int>(p.q * num_bins));
        auto& b = r.bins[static_cast<size_t>(m)];
        b.sum_conf += p.q;
        b.sum_acc += p.y;
        b.count += 1;
    }
    r.recompute();
    return r;
}

ReliabilityReport aggregate_reports(const std::vector<ReliabilityReport>& reports) {
    if (reports.empty()) throw ConfigError("nothing to aggregate");
    ReliabilityReport out = reports.front();
    out.dataset_tag = "aggregate";
    out.eps_v = 0.0;
    for (size_t i = 1; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (r.num_bins != out.num_bins)
            throw ConfigError("aggregating reports with mixed bin counts");
        for (int m = 0; m < out.num_bins; ++m) {
            out.bins[static_cast<size_t>(m)].sum_conf += r.bins[static_cast<size_t>(m)].sum_conf;
            out.bins[static_cast<size_t>(m)].sum_acc += r.bins[static_cast<size_t>(m)].sum_acc;
            out.bins[static_cast<size_t>(m)].count += r.bins[static_cast<size_t>(m)].count;
        }
    }
    out.recompute();
    return out;
}

namespace {

std::vector<double> ranks_avg_ties(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw DivergenceError("degenerate sample: zero variance in correlation");
    return sab / std::sqrt(saa * sbb);
}

double spearman_p_two_sided(double r, size_t n) {
    if (n < 3) return 1.0;
    const double denom = 1.0 - r * r;
    if (denom <= 0.0) return 0.0;
    const double t = r * std::sqrt((static_cast<double>(n) - 2.0) / denom);
    boost::math::students_t dist(static_cast<double>(n) - 2.0);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

CorrelationResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ShapeError("correlation inputs differ in length");
    if (xs.size() < 3) throw ConfigError("correlation needs at least 3 points");
    const std::vector<double> rx = ranks_avg_ties(xs);
    const std::vector<double> ry = ranks_avg_ties(ys);
    CorrelationResult res;
    res.coefficient = pearson(rx, ry);
    res.p_value = spearman_p_two_sided(res.coefficient, xs.size());
    res.retained = static_cast<int>(xs.size());
    res.outliers = 0;
    return res;
}

CorrelationResult shepherds_pi(const std::vector<double>& xs, const std::vector<double>& ys,
                               int bootstrap, Rng& rng) {
    const size_t n = xs.size();
    if (n != ys.size()) throw ShapeError("correlation inputs differ in length");
    if (n < 10) throw ConfigError("shepherds_pi needs at least 10 points");
    if (bootstrap < 1) throw ConfigError("bootstrap count must be positive");

    {
        // degenerate check on the full sample
        double vx = 0, vy = 0, mx = 0, my = 0;
        for (size_t i = 0; i < n; ++i) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            vx += (xs[i] - mx) * (xs[i] - mx);
            vy += (ys[i] - my) * (ys[i] - my);
        }
        if (vx <= 0.0 || vy <= 0.0)
            throw DivergenceError("degenerate sample: zero variance in shepherds_pi");
    }

    // per-point distances across bootstrap resamples of (mean, covariance)
    std::vector<std::vector<double>> dists(n);
    for (auto& d : dists) d.reserve(static_cast<size_t>(bootstrap));
    std::vector<size_t> idx(n);
    for (int b = 0; b < bootstrap; ++b) {
        for (size_t i = 0; i < n; ++i)
            idx[i] = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 1));
        double mx = 0, my = 0;
        for (size_t i : idx) {
            mx += xs[i];
            my += ys[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double sxx = 0, sxy = 0, syy = 0;
        for (size_t i : idx) {
            const double dx = xs[i] - mx, dy = ys[i] - my;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        const double norm = static_cast<double>(n) - 1.0;
        sxx /= norm;
        sxy /= norm;
        syy /= norm;
        const double det = sxx * syy - sxy * sxy;
        if (det <= 1e-300) continue;  // collapsed resample; skip
        for (size_t i = 0; i < n; ++i) {
            const double dx = xs[i] - mx, dy = ys[i] - my;
            dists[i].push_back((syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det);
        }
    }
    if (dists[0].empty())
        throw DivergenceError("all bootstrap resamples were degenerate in shepherds_pi");

    std::vector<double> keep_x, keep_y;
    int outliers = 0;
    for (size_t i = 0; i < n; ++i) {
        auto& d = dists[i];
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
        double med = d[d.size() / 2];
        if (d.size() % 2 == 0) {
            const double hi = med;
            std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2 - 1),
                             d.end());
            med = 0.5 * (hi + d[d.size() / 2 - 1]);
        }
        if (med >= 6.0) {
            ++outliers;
        } else {
            keep_x.push_back(xs[i]);
            keep_y.push_back(ys[i]);
        }
    }
    if (keep_x.size() < 3)
        throw DivergenceError("outlier removal left too few points in shepherds_pi");

    const std::vector<double> rx = ranks_avg_ties(keep_x);
    const std::vector<double> ry = ranks_avg_ties(keep_y);
    CorrelationResult res;
    res.coefficient = pearson(rx, ry);
    res.p_value = std::min(1.0, 2.0 * spearman_p_two_sided(res.coefficient, keep_x.size()));
    res.retained = static_cast<int>(keep_x.size());
    res.outliers = outliers;
    return res;
}

}  // namespace calvid

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calvid/rng.hpp"

namespace calvid {

/// One (confidence, outcome) observation.
struct PredPair {
    float q = 0.0f;
    uint8_t y = 0;
};

struct ReliabilityBin {
    double sum_conf = 0.0;
    double sum_acc = 0.0;
    int64_t count = 0;
};

/// Equal-width confidence bins over [0,1] with per-bin mean confidence and
/// empirical accuracy, plus the ECE/MCE summary. Bin m (1-based) covers
/// [(m-1)/M, m/M), the last bin closed at 1; binning uses
/// min(M-1, floor(q*M)).
struct ReliabilityReport {
    int num_bins = 20;
    std::vector<ReliabilityBin> bins;
    int64_t n = 0;
    double ece = 0.0;
    double mce = 0.0;

    std::string head;
    std::string dataset_tag;
    double eps_v = 0.0;

    double conf(int m) const { return bins[m].count ? bins[m].sum_conf / bins[m].count : 0.0; }
    double acc(int m) const { return bins[m].count ? bins[m].sum_acc / bins[m].count : 0.0; }
    void recompute();
};

ReliabilityReport reliability(const std::vector<PredPair>& pairs, int num_bins = 20);

/// Pools the raw pairs behind the reports (exact, since the bins are fixed
/// intervals: pooling pairs == merging per-bin sums) and recomputes ECE/MCE.
ReliabilityReport aggregate_reports(const std::vector<ReliabilityReport>& reports);

struct CorrelationResult {
    double coefficient = 0.0;
    double p_value = 1.0;
    int retained = 0;
    int outliers = 0;
};

/// Robust rank correlation: per-point squared Mahalanobis distance is the
/// median over `bootstrap` resamples of the bivariate mean/covariance;
/// points with distance >= 6 are dropped; Spearman correlation on the rest;
/// the Spearman p-value is doubled (capped at 1).
CorrelationResult shepherds_pi(const std::vector<double>& xs, const std::vector<double>& ys,
                               int bootstrap, Rng& rng);

/// Plain Spearman rank correlation (average ranks for ties) with the
/// two-sided t-approximation p-value.
CorrelationResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace calvid

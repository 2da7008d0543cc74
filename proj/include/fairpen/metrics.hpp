#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairpen {

// Metric undefined for the input (single-class labels, empty group, zero
// denominator rate).
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DegenerateError : public UndefinedMetricError {
public:
    using UndefinedMetricError::UndefinedMetricError;
};

// Nine nearest-rank quantiles q_10, ..., q_90 of a sample:
// q_r = sorted[ceil(r n / 100)] (1-based).
struct QuantileGrid {
    std::vector<double> values;

    static QuantileGrid of(std::span<const double> sample);
    std::size_t size() const { return values.size(); }
};

double nearest_rank_quantile(std::span<const double> sample, int percent);

// Rank-based AUC; ties contribute 1/2.
double auc(std::span<const double> scores, std::span<const double> labels);

// Threshold maximizing TPR - FPR for predictions I(score > tau). Candidates are
// -inf, midpoints of consecutive distinct scores and +inf; ties go to the
// smallest candidate.
double choose_threshold(std::span<const double> scores, std::span<const double> labels);

std::vector<double> apply_threshold(std::span<const double> scores, double threshold);

double mae(std::span<const double> predictions, std::span<const double> targets);

// |E(v | A=1) / E(v | A=0) - 1| for a binary attribute. v is usually the
// thresholded prediction; regression passes the raw scores.
double sp_discrete(std::span<const double> values, std::span<const double> a);

// mean over q in grid of |E(v | A <= q) / E(v) - 1|.
double sp_continuous(std::span<const double> values, std::span<const double> a, const QuantileGrid& grid);

// sum over y of |E(v | A=1, Y=y) / E(v | A=0, Y=y) - 1| for binary A and Y.
// With a Y grid (continuous outcome), Y=y becomes Y <= y and the sum a mean.
double eo_discrete(std::span<const double> values, std::span<const double> a, std::span<const double> y,
    const std::optional<QuantileGrid>& y_grid = std::nullopt);

// Continuous A: |A*|^-1 sum over y, q of |E(v | A <= q, Y=y) / E(v | Y=y) - 1|.
// With a Y grid, Y=y becomes Y <= y and the y-sum becomes a mean.
double eo_continuous(std::span<const double> values, std::span<const double> a, std::span<const double> y, const QuantileGrid& a_grid,
    const std::optional<QuantileGrid>& y_grid = std::nullopt);

// sum over a of sup_t |F(t | A=a) - F(t)| (discrete attribute), or the mean over
// q in grid of sup_t |F(t | A <= q) - F(t)| (continuous attribute).
double ks_gsp(std::span<const double> scores, std::span<const double> a, const std::optional<QuantileGrid>& a_grid = std::nullopt);

// sum over (a, y) of sup_t |F(t | A=a, Y=y) - F(t | Y=y)|; grids switch the
// corresponding variable to <= conditioning with averaging.
double ks_geo(std::span<const double> scores, std::span<const double> a, std::span<const double> y,
    const std::optional<QuantileGrid>& a_grid = std::nullopt, const std::optional<QuantileGrid>& y_grid = std::nullopt);

// Number of groups a discrete metric sums over (distinct values of the
// conditioning variables).
std::size_t group_count(std::span<const double> values);

struct ParetoPoint {
    double utility = 0.0;  // maximized
    double fairness = 0.0; // minimized

    friend bool operator==(const ParetoPoint&, const ParetoPoint&) = default;
};

// q dominates p when q.utility >= p.utility and q.fairness <= p.fairness with
// at least one strict.
bool dominates(const ParetoPoint& q, const ParetoPoint& p);

// Per-point flag: not dominated by any other point. Points with NaN
// coordinates are never on the frontier.
std::vector<bool> pareto_flags(std::span<const ParetoPoint> points);

// Non-dominated points, duplicates removed, sorted by utility ascending.
std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points);

struct TopkSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0; // population
    bool empty() const { return count == 0; }
};

// Mean and std of the k smallest fairness values among points whose utility
// exceeds the threshold. Negate utility and threshold for error-type metrics.
TopkSummary topk_fair_summary(std::span<const ParetoPoint> frontier, double utility_threshold, std::size_t k = 5);

} // namespace fairpen

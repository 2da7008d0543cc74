#include "fairpen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>

namespace fairpen {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

using Mask = std::vector<char>;

Mask all_rows(std::size_t n)
{
    return Mask(n, 1);
}

Mask equal_to(std::span<const double> v, double value)
{
    Mask m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = v[i] == value ? 1 : 0;
    }
    return m;
}

Mask at_most(std::span<const double> v, double value)
{
    Mask m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = v[i] <= value ? 1 : 0;
    }
    return m;
}

Mask both(const Mask& a, const Mask& b)
{
    Mask m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        m[i] = static_cast<char>(a[i] & b[i]);
    }
    return m;
}

std::vector<double> distinct(std::span<const double> v)
{
    std::vector<double> out(v.begin(), v.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double masked_mean(std::span<const double> values, const Mask& mask, const std::string& group)
{
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask[i]) {
            sum += values[i];
            ++count;
        }
    }
    if (count == 0) {
        throw DegenerateError("empty group " + group);
    }
    return sum / static_cast<double>(count);
}

double ratio_deviation(std::span<const double> values, const Mask& numerator, const Mask& denominator, const std::string& num_name,
    const std::string& den_name)
{
    const double top = masked_mean(values, numerator, num_name);
    const double bottom = masked_mean(values, denominator, den_name);
    if (bottom == 0.0) {
        throw DegenerateError("zero rate in group " + den_name);
    }
    return std::abs(top / bottom - 1.0);
}

void require_binary(std::span<const double> v, const char* what)
{
    for (double x : v) {
        if (x != 0.0 && x != 1.0) {
            throw std::invalid_argument(std::string(what) + " must be binary {0, 1}");
        }
    }
}

// sup_t |F(t | group) - F(t | reference)| for group a subset of reference,
// evaluated at each distinct reference score.
double ks_distance(std::span<const double> scores, const Mask& group, const Mask& reference, const std::string& name)
{
    std::vector<std::size_t> order;
    std::size_t n_group = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (reference[i]) {
            order.push_back(i);
            n_group += group[i] ? 1 : 0;
        }
    }
    if (order.empty() || n_group == 0) {
        throw DegenerateError("empty group " + name);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
    const double inv_group = 1.0 / static_cast<double>(n_group);
    const double inv_ref = 1.0 / static_cast<double>(order.size());
    std::size_t c_group = 0;
    std::size_t c_ref = 0;
    double best = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ++c_ref;
        c_group += group[order[k]] ? 1 : 0;
        if (k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]]) {
            best = std::max(best, std::abs(static_cast<double>(c_group) * inv_group - static_cast<double>(c_ref) * inv_ref));
        }
    }
    return best;
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// Conditioning sets for one variable: discrete values (summed) or quantile
// prefixes (averaged).
struct Conditioning {
    std::vector<Mask> masks;
    std::vector<std::string> names;
    double weight = 1.0;
};

Conditioning conditioning(std::span<const double> v, const std::optional<QuantileGrid>& grid, const char* var)
{
    Conditioning c;
    if (grid) {
        if (grid->values.empty()) {
            throw std::invalid_argument("empty quantile grid");
        }
        for (double q : grid->values) {
            c.masks.push_back(at_most(v, q));
            c.names.push_back(std::string(var) + "<=" + fmt(q));
        }
        c.weight = 1.0 / static_cast<double>(grid->values.size());
    } else {
        for (double value : distinct(v)) {
            c.masks.push_back(equal_to(v, value));
            c.names.push_back(std::string(var) + "=" + fmt(value));
        }
    }
    return c;
}

} // namespace

double nearest_rank_quantile(std::span<const double> sample, int percent)
{
    if (sample.empty()) {
        throw std::invalid_argument("quantile of an empty sample");
    }
    if (percent <= 0 || percent > 100) {
        throw std::invalid_argument("quantile percent must lie in (0, 100]");
    }
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100; // ceil(r n / 100)
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

QuantileGrid QuantileGrid::of(std::span<const double> sample)
{
    QuantileGrid grid;
    for (int r = 10; r <= 90; r += 10) {
        grid.values.push_back(nearest_rank_quantile(sample, r));
    }
    return grid;
}

double auc(std::span<const double> scores, std::span<const double> labels)
{
    require_same_length(scores.size(), labels.size(), "auc");
    require_binary(labels, "auc labels");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t {0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        // Ranks i+1 .. j+1 share their average.
        const double rank = 0.5 * static_cast<double>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1.0) {
                positive_rank_sum += rank;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedMetricError("auc needs both classes present");
    }
    const double np = static_cast<double>(n_pos);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double choose_threshold(std::span<const double> scores, std::span<const double> labels)
{
    require_same_length(scores.size(), labels.size(), "choose_threshold");
    require_binary(labels, "threshold labels");
    const auto values = distinct(scores);
    std::int64_t positives = 0;
    for (double y : labels) {
        positives += y == 1.0 ? 1 : 0;
    }
    const auto negatives = static_cast<std::int64_t>(labels.size()) - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetricError("threshold selection needs both classes present");
    }

    // Count of positives / negatives scoring exactly each distinct value.
    std::vector<std::int64_t> pos_at(values.size(), 0);
    std::vector<std::int64_t> neg_at(values.size(), 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto k = static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), scores[i]) - values.begin());
        (labels[i] == 1.0 ? pos_at : neg_at)[k] += 1;
    }

    // Candidate c (0 = -inf, m = +inf, else midpoint below values[c]) predicts
    // positive for values[c..]. J is compared as tp * N - fp * P to stay exact.
    std::int64_t tp = positives;
    std::int64_t fp = negatives;
    std::int64_t best_j = tp * negatives - fp * positives;
    std::size_t best = 0;
    for (std::size_t c = 1; c <= values.size(); ++c) {
        tp -= pos_at[c - 1];
        fp -= neg_at[c - 1];
        const std::int64_t j = tp * negatives - fp * positives;
        if (j > best_j) {
            best_j = j;
            best = c;
        }
    }
    if (best == 0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (best == values.size()) {
        return std::numeric_limits<double>::infinity();
    }
    return 0.5 * (values[best - 1] + values[best]);
}

std::vector<double> apply_threshold(std::span<const double> scores, double threshold)
{
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = scores[i] > threshold ? 1.0 : 0.0;
    }
    return out;
}

double mae(std::span<const double> predictions, std::span<const double> targets)
{
    require_same_length(predictions.size(), targets.size(), "mae");
    if (predictions.empty()) {
        throw UndefinedMetricError("mae of an empty sample");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        total += std::abs(predictions[i] - targets[i]);
    }
    return total / static_cast<double>(predictions.size());
}

double sp_discrete(std::span<const double> values, std::span<const double> a)
{
    require_same_length(values.size(), a.size(), "sp_discrete");
    require_binary(a, "sp_discrete attribute");
    return ratio_deviation(values, equal_to(a, 1.0), equal_to(a, 0.0), "A=1", "A=0");
}

double sp_continuous(std::span<const double> values, std::span<const double> a, const QuantileGrid& grid)
{
    require_same_length(values.size(), a.size(), "sp_continuous");
    const Mask everyone = all_rows(values.size());
    const Conditioning groups = conditioning(a, grid, "A");
    double total = 0.0;
    for (std::size_t g = 0; g < groups.masks.size(); ++g) {
        total += ratio_deviation(values, groups.masks[g], everyone, groups.names[g], "all");
    }
    return total * groups.weight;
}

double eo_discrete(std::span<const double> values, std::span<const double> a, std::span<const double> y, const std::optional<QuantileGrid>& y_grid)
{
    require_same_length(values.size(), a.size(), "eo_discrete");
    require_same_length(values.size(), y.size(), "eo_discrete");
    require_binary(a, "eo_discrete attribute");
    if (!y_grid) {
        require_binary(y, "eo_discrete outcome");
    }
    const Mask a1 = equal_to(a, 1.0);
    const Mask a0 = equal_to(a, 0.0);
    const Conditioning y_groups = conditioning(y, y_grid, "Y");
    double total = 0.0;
    for (std::size_t j = 0; j < y_groups.masks.size(); ++j) {
        const Mask& ym = y_groups.masks[j];
        total += ratio_deviation(values, both(a1, ym), both(a0, ym), "A=1," + y_groups.names[j], "A=0," + y_groups.names[j]);
    }
    return total * y_groups.weight;
}

double eo_continuous(std::span<const double> values, std::span<const double> a, std::span<const double> y, const QuantileGrid& a_grid,
    const std::optional<QuantileGrid>& y_grid)
{
    require_same_length(values.size(), a.size(), "eo_continuous");
    require_same_length(values.size(), y.size(), "eo_continuous");
    const Conditioning a_groups = conditioning(a, a_grid, "A");
    const Conditioning y_groups = conditioning(y, y_grid, "Y");
    double total = 0.0;
    for (std::size_t j = 0; j < y_groups.masks.size(); ++j) {
        for (std::size_t i = 0; i < a_groups.masks.size(); ++i) {
            total += ratio_deviation(values, both(a_groups.masks[i], y_groups.masks[j]), y_groups.masks[j],
                a_groups.names[i] + "," + y_groups.names[j], y_groups.names[j]);
        }
    }
    return total * a_groups.weight * y_groups.weight;
}

double ks_gsp(std::span<const double> scores, std::span<const double> a, const std::optional<QuantileGrid>& a_grid)
{
    require_same_length(scores.size(), a.size(), "ks_gsp");
    const Mask everyone = all_rows(scores.size());
    const Conditioning groups = conditioning(a, a_grid, "A");
    double total = 0.0;
    for (std::size_t g = 0; g < groups.masks.size(); ++g) {
        total += ks_distance(scores, groups.masks[g], everyone, groups.names[g]);
    }
    return total * groups.weight;
}

double ks_geo(std::span<const double> scores, std::span<const double> a, std::span<const double> y, const std::optional<QuantileGrid>& a_grid,
    const std::optional<QuantileGrid>& y_grid)
{
    require_same_length(scores.size(), a.size(), "ks_geo");
    require_same_length(scores.size(), y.size(), "ks_geo");
    const Conditioning a_groups = conditioning(a, a_grid, "A");
    const Conditioning y_groups = conditioning(y, y_grid, "Y");
    double total = 0.0;
    for (std::size_t j = 0; j < y_groups.masks.size(); ++j) {
        for (std::size_t i = 0; i < a_groups.masks.size(); ++i) {
            total += ks_distance(scores, both(a_groups.masks[i], y_groups.masks[j]), y_groups.masks[j], a_groups.names[i] + "," + y_groups.names[j]);
        }
    }
    return total * a_groups.weight * y_groups.weight;
}

std::size_t group_count(std::span<const double> values)
{
    return distinct(values).size();
}

bool dominates(const ParetoPoint& q, const ParetoPoint& p)
{
    return q.utility >= p.utility && q.fairness <= p.fairness && (q.utility > p.utility || q.fairness < p.fairness);
}

std::vector<bool> pareto_flags(std::span<const ParetoPoint> points)
{
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isnan(points[i].utility) && !std::isnan(points[i].fairness)) {
            order.push_back(i);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (points[x].utility != points[y].utility) {
            return points[x].utility > points[y].utility;
        }
        return points[x].fairness < points[y].fairness;
    });

    // Sweep by decreasing utility; within a utility level only the smallest
    // fairness survives, and only if it beats every higher-utility point.
    std::vector<bool> flags(points.size(), false);
    double best_higher = std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && points[order[j]].utility == points[order[i]].utility) {
            ++j;
        }
        const double level_min = points[order[i]].fairness;
        if (level_min < best_higher) {
            for (std::size_t k = i; k < j && points[order[k]].fairness == level_min; ++k) {
                flags[order[k]] = true;
            }
        }
        best_higher = std::min(best_higher, level_min);
        i = j;
    }
    return flags;
}

std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points)
{
    const auto flags = pareto_flags(points);
    std::vector<ParetoPoint> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (flags[i]) {
            out.push_back(points[i]);
        }
    }
    std::sort(out.begin(), out.end(), [](const ParetoPoint& x, const ParetoPoint& y) {
        return x.utility != y.utility ? x.utility < y.utility : x.fairness < y.fairness;
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

TopkSummary topk_fair_summary(std::span<const ParetoPoint> frontier, double utility_threshold, std::size_t k)
{
    std::vector<double> qualifying;
    for (const auto& p : frontier) {
        if (p.utility > utility_threshold && !std::isnan(p.fairness)) {
            qualifying.push_back(p.fairness);
        }
    }
    std::sort(qualifying.begin(), qualifying.end());
    if (qualifying.size() > k) {
        qualifying.resize(k);
    }
    TopkSummary s;
    s.count = qualifying.size();
    if (s.count == 0) {
        return s;
    }
    s.mean = std::accumulate(qualifying.begin(), qualifying.end(), 0.0) / static_cast<double>(s.count);
    double ss = 0.0;
    for (double v : qualifying) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(ss / static_cast<double>(s.count));
    return s;
}

} // namespace fairpen

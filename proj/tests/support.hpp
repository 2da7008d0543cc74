#pragma once

#include "fairpen/metrics.hpp"
#include "fairpen/nn.hpp"
#include "fairpen/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace support {

using fairpen::Matrix;
using fairpen::Mlp;

// Scalar head on top of the network output: value and d value / d output.
using Head = std::function<std::pair<double, Matrix>(const Matrix&)>;

inline double relative_error(double analytic, double numeric, double floor = 1e-6)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
    double worst_param = 0.0;
    double worst_input = 0.0;
    std::size_t checked = 0;
    std::size_t zero_partials = 0;
};

// Relative error of one partial. A partial that is zero up to rounding is
// compared with the central-difference rounding level instead.
inline double partial_error(double analytic, double numeric, std::size_t& zero_partials)
{
    if (std::abs(analytic) < 1e-12 && std::abs(numeric) < 1e-9) {
        ++zero_partials;
        return 0.0;
    }
    return relative_error(analytic, numeric);
}

inline std::vector<double*> parameter_pointers(Mlp& net)
{
    std::vector<double*> out;
    net.for_each_parameter([&](std::span<double> p, std::span<double>) {
        for (double& v : p) {
            out.push_back(&v);
        }
    });
    return out;
}

inline std::vector<double> gradient_values(Mlp& net)
{
    std::vector<double> out;
    net.for_each_parameter([&](std::span<double>, std::span<double> g) { out.insert(out.end(), g.begin(), g.end()); });
    return out;
}

// Central differences (step h) of head(forward(x, train)) against the
// analytic parameter and input gradients.
inline GradCheck gradient_check(Mlp& net, const Matrix& x, const Head& head, double h = 1e-5)
{
    net.zero_grad();
    const Matrix out = net.forward(x, fairpen::Mode::train);
    const Matrix input_grad = net.backward(head(out).second);
    const std::vector<double> analytic = gradient_values(net);
    net.zero_grad();

    const auto value_at = [&](const Matrix& batch) { return head(net.forward(batch, fairpen::Mode::train)).first; };

    GradCheck result;
    const auto params = parameter_pointers(net);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double saved = *params[k];
        *params[k] = saved + h;
        const double up = value_at(x);
        *params[k] = saved - h;
        const double down = value_at(x);
        *params[k] = saved;
        result.worst_param = std::max(result.worst_param, partial_error(analytic[k], (up - down) / (2 * h), result.zero_partials));
        ++result.checked;
    }
    Matrix probe = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            probe(i, j) = x(i, j) + h;
            const double up = value_at(probe);
            probe(i, j) = x(i, j) - h;
            const double down = value_at(probe);
            probe(i, j) = x(i, j);
            result.worst_input = std::max(result.worst_input, partial_error(input_grad(i, j), (up - down) / (2 * h), result.zero_partials));
            ++result.checked;
        }
    }
    return result;
}

// Smallest |pre-activation| seen by any ReLU in a train-mode pass; finite
// differences are only trusted away from the kink.
inline double relu_margin(Mlp& net, const Matrix& x)
{
    net.forward(x, fairpen::Mode::train);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& layer : net.layers()) {
        if (const auto* act = std::get_if<fairpen::ActivationLayer>(&layer); act && act->kind == fairpen::Activation::relu) {
            margin = std::min(margin, act->cached_input.cwiseAbs().minCoeff());
        }
    }
    return margin;
}

inline Head weighted_sum_head(const Matrix& weights)
{
    return [weights](const Matrix& out) { return std::pair {(out.array() * weights.array()).sum(), weights}; };
}

inline Head bce_head(std::vector<double> labels)
{
    return [labels](const Matrix& out) {
        std::vector<double> p(out.data(), out.data() + out.rows());
        const auto r = fairpen::bce_loss(p, labels);
        return std::pair {r.value, Matrix(r.grad)};
    };
}

inline Head mae_head(std::vector<double> targets)
{
    return [targets](const Matrix& out) {
        std::vector<double> p(out.data(), out.data() + out.rows());
        const auto r = fairpen::mae_loss(p, targets);
        return std::pair {r.value, Matrix(r.grad)};
    };
}

// ---- Brute-force metric oracles (direct counting, no shared helpers). ----

struct Undefined { };

inline double oracle_quantile(std::vector<double> v, int r)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    std::size_t k = 0;
    while (k * 100 < static_cast<std::size_t>(r) * n) {
        ++k;
    }
    return v[std::max<std::size_t>(k, 1) - 1];
}

inline std::vector<double> oracle_grid(const std::vector<double>& v)
{
    std::vector<double> g;
    for (int r = 10; r <= 90; r += 10) {
        g.push_back(oracle_quantile(v, r));
    }
    return g;
}

inline std::vector<double> oracle_levels(const std::vector<double>& v)
{
    std::vector<double> out;
    for (double x : v) {
        if (std::find(out.begin(), out.end(), x) == out.end()) {
            out.push_back(x);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline double oracle_auc(const std::vector<double>& s, const std::vector<double>& y)
{
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1.0 && y[j] == 0.0) {
                pairs += 1.0;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    if (pairs == 0.0) {
        throw Undefined {};
    }
    return wins / pairs;
}

// Mean of v over rows where keep(i) holds; throws Undefined when empty.
template <typename Keep>
double oracle_mean(const std::vector<double>& v, Keep keep)
{
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (keep(i)) {
            sum += v[i];
            count += 1.0;
        }
    }
    if (count == 0.0) {
        throw Undefined {};
    }
    return sum / count;
}

inline double oracle_ratio(double top, double bottom)
{
    if (bottom == 0.0) {
        throw Undefined {};
    }
    return std::abs(top / bottom - 1.0);
}

inline double oracle_sp_discrete(const std::vector<double>& v, const std::vector<double>& a)
{
    const double top = oracle_mean(v, [&](std::size_t i) { return a[i] == 1.0; });
    const double bottom = oracle_mean(v, [&](std::size_t i) { return a[i] == 0.0; });
    return oracle_ratio(top, bottom);
}

inline double oracle_sp_continuous(const std::vector<double>& v, const std::vector<double>& a)
{
    const double overall = oracle_mean(v, [](std::size_t) { return true; });
    double total = 0.0;
    const auto grid = oracle_grid(a);
    for (double q : grid) {
        total += oracle_ratio(oracle_mean(v, [&](std::size_t i) { return a[i] <= q; }), overall);
    }
    return total / static_cast<double>(grid.size());
}

// Y conditioning: each distinct value (summed) or each grid prefix (averaged).
inline std::vector<std::function<bool(std::size_t)>> oracle_slices(const std::vector<double>& v, bool continuous, double& weight)
{
    std::vector<std::function<bool(std::size_t)>> out;
    if (continuous) {
        for (double q : oracle_grid(v)) {
            out.push_back([&v, q](std::size_t i) { return v[i] <= q; });
        }
        weight = 1.0 / 9.0;
    } else {
        for (double level : oracle_levels(v)) {
            out.push_back([&v, level](std::size_t i) { return v[i] == level; });
        }
        weight = 1.0;
    }
    return out;
}

inline double oracle_eo(const std::vector<double>& v, const std::vector<double>& a, const std::vector<double>& y, bool a_continuous, bool y_continuous)
{
    double wy = 1.0;
    const auto y_slices = oracle_slices(y, y_continuous, wy);
    double total = 0.0;
    if (!a_continuous) {
        for (const auto& in_y : y_slices) {
            const double top = oracle_mean(v, [&](std::size_t i) { return a[i] == 1.0 && in_y(i); });
            const double bottom = oracle_mean(v, [&](std::size_t i) { return a[i] == 0.0 && in_y(i); });
            total += oracle_ratio(top, bottom);
        }
        return total / (y_continuous ? 9.0 : 1.0);
    }
    for (const auto& in_y : y_slices) {
        const double bottom = oracle_mean(v, in_y);
        for (double q : oracle_grid(a)) {
            total += oracle_ratio(oracle_mean(v, [&](std::size_t i) { return a[i] <= q && in_y(i); }), bottom);
        }
    }
    return total / 9.0 / (y_continuous ? 9.0 : 1.0);
}

// KS of the rows selected by group against the rows selected by reference,
// by brute force over every threshold (library oracle on the sub-sample).
template <typename Group, typename Reference>
double oracle_ks(const std::vector<double>& s, Group group, Reference reference)
{
    std::vector<double> sub;
    std::vector<char> mask;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (reference(i)) {
            sub.push_back(s[i]);
            mask.push_back(group(i) ? 1 : 0);
        }
    }
    if (sub.empty() || std::count(mask.begin(), mask.end(), 1) == 0) {
        throw Undefined {};
    }
    std::unique_ptr<bool[]> flags(new bool[mask.size()]);
    std::copy(mask.begin(), mask.end(), flags.get());
    return fairpen::brute_force_ks(sub, std::span<const bool>(flags.get(), mask.size()));
}

inline double oracle_ks_gsp(const std::vector<double>& s, const std::vector<double>& a, bool a_continuous)
{
    double wa = 1.0;
    const auto slices = oracle_slices(a, a_continuous, wa);
    double total = 0.0;
    for (const auto& in_a : slices) {
        total += oracle_ks(s, in_a, [](std::size_t) { return true; });
    }
    return a_continuous ? total / 9.0 : total;
}

inline double oracle_ks_geo(const std::vector<double>& s, const std::vector<double>& a, const std::vector<double>& y, bool a_continuous, bool y_continuous)
{
    double wa = 1.0;
    double wy = 1.0;
    const auto a_slices = oracle_slices(a, a_continuous, wa);
    const auto y_slices = oracle_slices(y, y_continuous, wy);
    double total = 0.0;
    for (const auto& in_y : y_slices) {
        for (const auto& in_a : a_slices) {
            total += oracle_ks(s, [&](std::size_t i) { return in_a(i) && in_y(i); }, in_y);
        }
    }
    return total / (a_continuous ? 9.0 : 1.0) / (y_continuous ? 9.0 : 1.0);
}

// Evaluates both sides; they agree when both are undefined or the values are
// within tol.
template <typename Library, typename Oracle>
bool agree(Library library, Oracle oracle, double tol = 1e-12)
{
    std::optional<double> lib;
    std::optional<double> ref;
    try {
        lib = library();
    } catch (const fairpen::UndefinedMetricError&) {
    }
    try {
        ref = oracle();
    } catch (const Undefined&) {
    }
    if (!lib || !ref) {
        return !lib && !ref;
    }
    return std::abs(*lib - *ref) <= tol;
}

inline std::vector<bool> oracle_pareto(const std::vector<fairpen::ParetoPoint>& pts)
{
    std::vector<bool> flags(pts.size(), true);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::isnan(pts[i].utility) || std::isnan(pts[i].fairness)) {
            flags[i] = false;
            continue;
        }
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const auto& q = pts[j];
            const auto& p = pts[i];
            if (q.utility >= p.utility && q.fairness <= p.fairness && (q.utility > p.utility || q.fairness < p.fairness)) {
                flags[i] = false;
                break;
            }
        }
    }
    return flags;
}

} // namespace support

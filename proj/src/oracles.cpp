#include "fairpen/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairpen {

DiscreteJoint::DiscreteJoint(std::vector<std::vector<double>> supports, std::vector<double> probabilities)
    : supports_(std::move(supports))
    , probabilities_(std::move(probabilities))
{
    std::size_t cells = 1;
    for (const auto& s : supports_) {
        if (s.empty()) {
            throw ValidationError("joint pmf: empty support");
        }
        cells *= s.size();
    }
    if (supports_.empty() || cells != probabilities_.size()) {
        throw ValidationError("joint pmf: table has " + std::to_string(probabilities_.size()) + " cells, supports imply " + std::to_string(cells));
    }
    double total = 0.0;
    for (double p : probabilities_) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ValidationError("joint pmf: negative or non-finite probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ValidationError("joint pmf sums to " + std::to_string(total) + ", not 1");
    }
    cumulative_.resize(probabilities_.size());
    std::partial_sum(probabilities_.begin(), probabilities_.end(), cumulative_.begin());
}

std::size_t DiscreteJoint::cell_of_index(std::span<const std::size_t> index) const
{
    std::size_t cell = 0;
    for (std::size_t v = 0; v < supports_.size(); ++v) {
        cell = cell * supports_[v].size() + index[v];
    }
    return cell;
}

std::vector<std::size_t> DiscreteJoint::index_of_cell(std::size_t cell) const
{
    std::vector<std::size_t> index(supports_.size());
    for (std::size_t v = supports_.size(); v-- > 0;) {
        index[v] = cell % supports_[v].size();
        cell /= supports_[v].size();
    }
    return index;
}

double DiscreteJoint::probability(std::span<const std::size_t> index) const
{
    return probabilities_[cell_of_index(index)];
}

double DiscreteJoint::marginal(std::span<const std::size_t> vars, std::span<const std::size_t> index) const
{
    double total = 0.0;
    for (std::size_t c = 0; c < probabilities_.size(); ++c) {
        const auto full = index_of_cell(c);
        bool match = true;
        for (std::size_t k = 0; k < vars.size(); ++k) {
            match = match && full[vars[k]] == index[k];
        }
        if (match) {
            total += probabilities_[c];
        }
    }
    return total;
}

std::vector<std::size_t> DiscreteJoint::sample(Rng& rng) const
{
    const double u = rng.uniform01() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) {
        --it;
    }
    return index_of_cell(static_cast<std::size_t>(it - cumulative_.begin()));
}

TabularDataset table5_toy(std::size_t n, std::uint64_t seed)
{
    Rng rng = Rng::derive(seed, streams::data);
    Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
    Matrix a(static_cast<Eigen::Index>(n), 1);
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        a(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-a(i, 0)))) ? 1.0 : 0.0;
    }
    return TabularDataset(std::move(x), std::move(a), std::move(y), {"x0"}, {false}, {{"a", "a", false}}, OutcomeKind::binary, "y");
}

const std::array<RatioCell, 4>& table5_cells()
{
    static const std::array<RatioCell, 4> cells {{
        {"p(1|1)/p(1)", 1.0, 1.0},
        {"p(1|0)/p(1)", 0.0, 1.0},
        {"p(0|1)/p(0)", 1.0, 0.0},
        {"p(0|0)/p(0)", 0.0, 0.0},
    }};
    return cells;
}

std::array<double, 4> table5_true_ratios()
{
    const double p1_given_1 = 1.0 / (1.0 + std::exp(-1.0));
    const double p1_given_0 = 0.5;
    const double p1 = 0.5 * (p1_given_1 + p1_given_0);
    const double p0 = 1.0 - p1;
    return {p1_given_1 / p1, p1_given_0 / p1, (1.0 - p1_given_1) / p0, (1.0 - p1_given_0) / p0};
}

std::vector<RatioToyRow> run_ratio_toy(const RatioToyConfig& config)
{
    const TabularDataset data = table5_toy(config.n, config.seed);
    RatioTrainConfig rc;
    rc.iterations = config.iterations;
    rc.batch_size = std::min(config.batch_size, config.n);
    rc.learning_rate = config.learning_rate;
    rc.seed = config.seed;
    rc.sampler = config.sampler;
    if (rc.sampler == SamplerKind::disjoint && config.n < 2 * rc.batch_size) {
        rc.batch_size = std::max<std::size_t>(1, config.n / 2);
    }
    const DensityRatioEstimator beta = pretrain_density_ratio(data, rc);

    const auto truth = table5_true_ratios();
    std::vector<RatioToyRow> rows;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& cell = table5_cells()[k];
        Eigen::RowVectorXd a(1);
        a[0] = cell.a;
        const double est = beta_value(beta, a, cell.y);
        rows.push_back({cell.name, truth[k], est, std::abs(est - truth[k])});
    }
    return rows;
}

TabularDataset synth_bias(const SyntheticBiasSpec& spec)
{
    Rng rng = Rng::derive(spec.seed, streams::data);
    const auto n = static_cast<Eigen::Index>(spec.n);
    Matrix x(n, 3);
    Matrix a(n, 1);
    Vector y(n);
    const double centre = 0.5;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double av = spec.continuous_attribute ? rng.uniform01() : (rng.bernoulli(0.5) ? 1.0 : 0.0);
        a(i, 0) = av;
        x(i, 0) = spec.rho * (av - centre) + spec.noise * rng.normal();
        x(i, 1) = spec.noise * rng.normal();
        x(i, 2) = spec.noise * rng.normal();
        y[i] = rng.bernoulli(sigmoid(1.5 * x(i, 0) + x(i, 1))) ? 1.0 : 0.0;
    }
    return TabularDataset(std::move(x), std::move(a), std::move(y), {"x1", "x2", "x3"}, {true, true, true}, {{"a", "a", spec.continuous_attribute}},
        OutcomeKind::binary, "y");
}

double brute_force_ks(std::span<const double> scores, std::span<const bool> group_mask)
{
    if (scores.size() != group_mask.size()) {
        throw std::invalid_argument("brute_force_ks: length mismatch");
    }
    const auto group_size = static_cast<double>(std::count(group_mask.begin(), group_mask.end(), true));
    if (group_size == 0.0) {
        throw std::invalid_argument("brute_force_ks: empty group");
    }
    std::vector<double> thresholds(scores.begin(), scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const std::size_t distinct = thresholds.size();
    for (std::size_t i = 0; i + 1 < distinct; ++i) {
        thresholds.push_back(0.5 * (thresholds[i] + thresholds[i + 1]));
    }

    double best = 0.0;
    const auto total = static_cast<double>(scores.size());
    for (double t : thresholds) {
        double in_group = 0.0;
        double in_all = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] <= t) {
                in_all += 1.0;
                in_group += group_mask[i] ? 1.0 : 0.0;
            }
        }
        best = std::max(best, std::abs(in_group / group_size - in_all / total));
    }
    return best;
}

std::vector<double> exact_geo_discriminator_oracle(const DiscreteJoint& joint, const std::function<double(std::size_t, std::size_t)>& beta)
{
    if (joint.variables() != 3) {
        throw ValidationError("GEO oracle needs a joint over (s, a, y)");
    }
    std::vector<double> out(joint.cells());
    const std::array<std::size_t, 2> ay_vars {1, 2};
    const std::array<std::size_t, 2> sy_vars {0, 2};
    const std::array<std::size_t, 1> a_var {1};
    const std::array<std::size_t, 1> y_var {2};
    for (std::size_t c = 0; c < joint.cells(); ++c) {
        const auto idx = joint.index_of_cell(c);
        const std::array<std::size_t, 2> ay {idx[1], idx[2]};
        const std::array<std::size_t, 2> sy {idx[0], idx[2]};
        const double p_ay = joint.marginal(ay_vars, ay);
        const double p_y = joint.marginal(y_var, std::array<std::size_t, 1> {idx[2]});
        const double p_a = joint.marginal(a_var, std::array<std::size_t, 1> {idx[1]});
        if (p_ay <= 0.0 || p_y <= 0.0) {
            out[c] = 0.5;
            continue;
        }
        const double s_given_ay = joint.probability_of_cell(c) / p_ay;
        const double s_given_y = joint.marginal(sy_vars, sy) / p_y;
        const double fake = beta(idx[1], idx[2]) * s_given_y * p_a * p_y / p_ay;
        const double denom = s_given_ay + fake;
        out[c] = denom > 0.0 ? s_given_ay / denom : 0.5;
    }
    return out;
}

std::vector<std::vector<double>> exact_ratio_table(const DiscreteJoint& joint)
{
    if (joint.variables() != 2) {
        throw ValidationError("ratio table needs a joint over (a, y)");
    }
    const std::array<std::size_t, 1> a_var {0};
    const std::array<std::size_t, 1> y_var {1};
    std::vector<std::vector<double>> out(joint.support(0).size(), std::vector<double>(joint.support(1).size(), 1.0));
    for (std::size_t i = 0; i < joint.support(0).size(); ++i) {
        for (std::size_t j = 0; j < joint.support(1).size(); ++j) {
            const double pa = joint.marginal(a_var, std::array<std::size_t, 1> {i});
            const double py = joint.marginal(y_var, std::array<std::size_t, 1> {j});
            const std::array<std::size_t, 2> idx {i, j};
            if (pa > 0.0 && py > 0.0) {
                out[i][j] = joint.probability(idx) / (pa * py);
            }
        }
    }
    return out;
}

TabularDataset sample_joint_dataset(const DiscreteJoint& joint, std::size_t n, std::uint64_t seed)
{
    if (joint.variables() != 2 && joint.variables() != 3) {
        throw ValidationError("sample_joint_dataset needs a joint over (s, a) or (s, a, y)");
    }
    Rng rng = Rng::derive(seed, streams::data);
    const auto rows = static_cast<Eigen::Index>(n);
    Matrix x(rows, 1);
    Matrix a(rows, 1);
    Vector y = Vector::Zero(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto idx = joint.sample(rng);
        x(i, 0) = joint.support(0)[idx[0]];
        a(i, 0) = joint.support(1)[idx[1]];
        if (joint.variables() == 3) {
            y[i] = joint.support(2)[idx[2]];
        }
    }
    return TabularDataset(std::move(x), std::move(a), std::move(y), {"s"}, {false}, {{"a", "a", false}}, OutcomeKind::binary, "y");
}

} // namespace fairpen

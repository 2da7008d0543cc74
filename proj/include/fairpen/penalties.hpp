#pragma once

#include "fairpen/data.hpp"
#include "fairpen/nn.hpp"

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairpen {

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Value of an adversarial penalty plus its gradient with respect to the
// scores s = h(x). Discriminator gradients are accumulated in the
// discriminator's own buffers.
struct PenaltyResult {
    double value = 0.0;
    Vector grad_scores;
};

// D(s, a) = sigmoid(f(s, a)); inputs are laid out as [s, a].
struct GspDiscriminator {
    Mlp net;
    std::size_t attribute_width = 0;

    static GspDiscriminator make(std::size_t attribute_width, const std::vector<std::size_t>& hidden, bool batch_norm, Rng& rng);
    Matrix inputs(std::span<const double> scores, const Matrix& a) const;
    Vector probabilities(std::span<const double> scores, const Matrix& a) const;
};

// D(s, a, y); inputs are laid out as [s, a, y].
struct GeoDiscriminator {
    Mlp net;
    std::size_t attribute_width = 0;

    static GeoDiscriminator make(std::size_t attribute_width, const std::vector<std::size_t>& hidden, bool batch_norm, Rng& rng);
    Matrix inputs(std::span<const double> scores, const Matrix& a, const Vector& y) const;
    Vector probabilities(std::span<const double> scores, const Matrix& a, const Vector& y) const;
};

// R = mean[log D(s_i, a_i) + log(1 - D(s_i, a'_i))]. Both terms see the
// scores, so the score gradient collects both.
PenaltyResult gsp_penalty(GspDiscriminator& discriminator, std::span<const double> scores, const Matrix& a, const Matrix& a_prime);

// Lookup table of density ratios keyed by the (a, y) cell.
struct RatioTable {
    std::map<std::vector<double>, double> ratios; // key: a..., y
    std::size_t attribute_width = 0;

    // Unseen cells are neutral (ratio 1).
    double lookup(const Eigen::RowVectorXd& a, double y) const;
};

// beta(a, y) = p(a, y) / (p(a) p(y)). Backed by a trained classifier (odds
// of D_beta), an empirical pmf table, or the constant 1.
class DensityRatioEstimator {
public:
    enum class Kind { neural, table, unit };

    static DensityRatioEstimator neural(Mlp net, std::size_t attribute_width);
    static DensityRatioEstimator table(RatioTable table);
    static DensityRatioEstimator unit();

    Kind kind() const { return kind_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }
    std::size_t attribute_width() const { return attribute_width_; }

    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    const RatioTable& ratio_table() const { return table_; }

    Matrix inputs(const Matrix& a, const Vector& y) const;
    double beta(const Eigen::RowVectorXd& a, double y) const;
    Vector beta(const Matrix& a, const Vector& y) const;

private:
    Kind kind_ = Kind::unit;
    bool frozen_ = true;
    std::size_t attribute_width_ = 0;
    Mlp net_;
    RatioTable table_;
};

// Odds transform of a clamped classifier probability.
double beta_value(double classifier_probability);
double beta_value(const DensityRatioEstimator& estimator, const Eigen::RowVectorXd& a, double y);

// Where the density-ratio weight is evaluated. observed_pair follows the
// two-phase training algorithm literally (weight at the batch's real (a_i, y_i));
// resampled_pair evaluates it at (a'_i, y_i), the placement in the population
// form of the penalty.
enum class BetaPlacement { observed_pair, resampled_pair };

std::string to_string(BetaPlacement placement);
BetaPlacement beta_placement_from_string(const std::string& name);

// R = mean[log D(s_i, a_i, y_i) + beta_i log(1 - D(s_i, a'_i, y_i))].
// Requires a frozen estimator; no gradient reaches it.
PenaltyResult geo_penalty(GeoDiscriminator& discriminator, const DensityRatioEstimator& beta, std::span<const double> scores, const Matrix& a,
    const Vector& y, const Matrix& a_prime, BetaPlacement placement = BetaPlacement::observed_pair);

struct RatioTrainConfig {
    std::size_t iterations = 1000; // L
    std::size_t batch_size = 100;
    double learning_rate = 0.005;
    std::uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::within_batch;
    std::vector<std::size_t> hidden {64, 64};
};

// Ascends mean[log D_beta(a, y) + log(1 - D_beta(a', y))] for L minibatches
// and returns the frozen estimator.
DensityRatioEstimator pretrain_density_ratio(const TabularDataset& dataset, const RatioTrainConfig& config);

// Plug-in ratios from empirical counts; needs discrete A and binary Y.
DensityRatioEstimator empirical_pmf_ratio(const TabularDataset& dataset);

// Exact maximizer of the GSP penalty for a discrete joint p(s, a) given as a
// table (rows: s values, columns: a values):
// D*(s, a) = p(s, a) / (p(s, a) + p(s) p(a)).
Matrix optimal_gsp_discriminator_oracle(const Matrix& joint);

} // namespace fairpen

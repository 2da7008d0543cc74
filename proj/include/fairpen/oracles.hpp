#pragma once

#include "fairpen/data.hpp"
#include "fairpen/penalties.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fairpen {

// Probability table over a finite product support. Cell (i0, i1, ...) is
// stored row-major (last variable fastest).
class DiscreteJoint {
public:
    DiscreteJoint(std::vector<std::vector<double>> supports, std::vector<double> probabilities);

    std::size_t variables() const { return supports_.size(); }
    const std::vector<double>& support(std::size_t var) const { return supports_[var]; }
    std::size_t cells() const { return probabilities_.size(); }

    double probability(std::span<const std::size_t> index) const;
    double probability_of_cell(std::size_t cell) const { return probabilities_[cell]; }
    std::vector<std::size_t> index_of_cell(std::size_t cell) const;
    std::size_t cell_of_index(std::span<const std::size_t> index) const;

    // Marginal over the listed variables, keyed by their indices.
    double marginal(std::span<const std::size_t> vars, std::span<const std::size_t> index) const;

    // Cell drawn by inversion; returns the per-variable indices.
    std::vector<std::size_t> sample(Rng& rng) const;

private:
    std::vector<std::vector<double>> supports_;
    std::vector<double> probabilities_;
    std::vector<double> cumulative_;
};

// A ~ Bernoulli(1/2), P(Y = 1 | A = a) = 1 / (1 + exp(-a)). X is one
// constant column.
TabularDataset table5_toy(std::size_t n, std::uint64_t seed);

// Cells in report order: (a=1, y=1), (a=0, y=1), (a=1, y=0), (a=0, y=0).
struct RatioCell {
    std::string name;
    double a = 0.0;
    double y = 0.0;
};
const std::array<RatioCell, 4>& table5_cells();

// p(y | a) / p(y) for each of table5_cells(), from the analytic law.
std::array<double, 4> table5_true_ratios();

struct RatioToyRow {
    std::string cell;
    double true_ratio = 0.0;
    double estimated_ratio = 0.0;
    double abs_error = 0.0;
};

struct RatioToyConfig {
    std::size_t n = 10000;
    std::size_t iterations = 10000;
    std::size_t batch_size = 100;
    double learning_rate = 0.005;
    std::uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::within_batch;
};

// Fits D_beta on table5_toy data and compares its odds with the true ratios.
std::vector<RatioToyRow> run_ratio_toy(const RatioToyConfig& config);

struct SyntheticBiasSpec {
    std::size_t n = 10000;
    double rho = 2.0;         // strength of A's imprint on the predictive feature
    double noise = 1.0;       // feature noise scale
    std::uint64_t seed = 0;
    bool continuous_attribute = false;
};

// A ~ Bernoulli(1/2) (or Uniform[0, 1]); x1 = rho * (A - mean A) + noise * e1,
// x2, x3 = noise * e; Y ~ Bernoulli(sigmoid(1.5 x1 + x2)). With rho = 0 the
// features are independent of A.
TabularDataset synth_bias(const SyntheticBiasSpec& spec);

// Maximum over every observed score and every midpoint between consecutive
// distinct scores of |F_group(t) - F_all(t)|, by direct counting.
double brute_force_ks(std::span<const double> scores, std::span<const bool> group_mask);

// D*(s, a, y) = p(s|a,y) / (p(s|a,y) + beta(a,y) p(s|y) p(a) p(y) / p(a,y))
// for a joint over variables (s, a, y). beta takes (a index, y index).
// Returns one value per cell of the joint; cells with p(a, y) = 0 get 0.5.
std::vector<double> exact_geo_discriminator_oracle(const DiscreteJoint& joint, const std::function<double(std::size_t, std::size_t)>& beta);

// Exact p(a, y) / (p(a) p(y)) for a joint over (a, y).
std::vector<std::vector<double>> exact_ratio_table(const DiscreteJoint& joint);

// Rows (s, a, y) sampled from a joint over (s, a, y) as a dataset whose one
// feature column carries s.
TabularDataset sample_joint_dataset(const DiscreteJoint& joint, std::size_t n, std::uint64_t seed);

} // namespace fairpen

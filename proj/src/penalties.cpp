#include "fairpen/penalties.hpp"

#include <cmath>

namespace fairpen {

namespace {

struct AdversarialResult {
    double value = 0.0;
    Matrix input_grad; // 2n x width, real rows first
};

// mean[log D(real_i) + w_i log(1 - D(fake_i))] through one train-mode pass
// over the stacked batch; parameter gradients land in net's buffers.
AdversarialResult adversarial_objective(Mlp& net, const Matrix& real, const Matrix& fake, const Vector* fake_weights)
{
    const Eigen::Index n = real.rows();
    if (fake.rows() != n || fake.cols() != real.cols()) {
        throw DimensionError("real and resampled inputs differ in shape");
    }
    Matrix stacked(2 * n, real.cols());
    stacked.topRows(n) = real;
    stacked.bottomRows(n) = fake;
    const Matrix p = net.forward(stacked, Mode::train);

    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix upstream(2 * n, 1);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pr = clamp_probability(p(i, 0));
        total += std::log(pr);
        upstream(i, 0) = inv_n / pr;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pf = clamp_probability(p(n + i, 0));
        const double w = fake_weights != nullptr ? (*fake_weights)[i] : 1.0;
        total += w * std::log(1.0 - pf);
        upstream(n + i, 0) = -w * inv_n / (1.0 - pf);
    }
    AdversarialResult result;
    result.value = total * inv_n;
    result.input_grad = net.backward(upstream);
    return result;
}

Vector score_gradient(const Matrix& input_grad)
{
    const Eigen::Index n = input_grad.rows() / 2;
    return input_grad.col(0).head(n) + input_grad.col(0).tail(n);
}

Matrix with_leading_scores(std::span<const double> scores, const Matrix& rest)
{
    if (static_cast<Eigen::Index>(scores.size()) != rest.rows()) {
        throw DimensionError("scores have " + std::to_string(scores.size()) + " rows, attributes have " + std::to_string(rest.rows()));
    }
    Matrix out(rest.rows(), rest.cols() + 1);
    for (Eigen::Index i = 0; i < rest.rows(); ++i) {
        out(i, 0) = scores[static_cast<std::size_t>(i)];
    }
    out.rightCols(rest.cols()) = rest;
    return out;
}

Matrix append_outcome(const Matrix& a, const Vector& y)
{
    if (a.rows() != y.size()) {
        throw DimensionError("attributes have " + std::to_string(a.rows()) + " rows, outcomes have " + std::to_string(y.size()));
    }
    Matrix out(a.rows(), a.cols() + 1);
    out.leftCols(a.cols()) = a;
    out.col(a.cols()) = y;
    return out;
}

Mlp make_discriminator_net(std::size_t input_width, const std::vector<std::size_t>& hidden, bool batch_norm, Rng& rng)
{
    return make_mlp(MlpSpec {input_width, hidden, batch_norm, Activation::sigmoid}, rng);
}

std::vector<double> cell_key(const Eigen::RowVectorXd& a, double y)
{
    std::vector<double> key(a.data(), a.data() + a.size());
    key.push_back(y);
    return key;
}

} // namespace

GspDiscriminator GspDiscriminator::make(std::size_t attribute_width, const std::vector<std::size_t>& hidden, bool batch_norm, Rng& rng)
{
    return {make_discriminator_net(1 + attribute_width, hidden, batch_norm, rng), attribute_width};
}

Matrix GspDiscriminator::inputs(std::span<const double> scores, const Matrix& a) const
{
    if (static_cast<std::size_t>(a.cols()) != attribute_width) {
        throw DimensionError("discriminator expects " + std::to_string(attribute_width) + " attribute columns, got " + std::to_string(a.cols()));
    }
    return with_leading_scores(scores, a);
}

Vector GspDiscriminator::probabilities(std::span<const double> scores, const Matrix& a) const
{
    return net.predict(inputs(scores, a)).col(0);
}

GeoDiscriminator GeoDiscriminator::make(std::size_t attribute_width, const std::vector<std::size_t>& hidden, bool batch_norm, Rng& rng)
{
    return {make_discriminator_net(2 + attribute_width, hidden, batch_norm, rng), attribute_width};
}

Matrix GeoDiscriminator::inputs(std::span<const double> scores, const Matrix& a, const Vector& y) const
{
    if (static_cast<std::size_t>(a.cols()) != attribute_width) {
        throw DimensionError("discriminator expects " + std::to_string(attribute_width) + " attribute columns, got " + std::to_string(a.cols()));
    }
    return with_leading_scores(scores, append_outcome(a, y));
}

Vector GeoDiscriminator::probabilities(std::span<const double> scores, const Matrix& a, const Vector& y) const
{
    return net.predict(inputs(scores, a, y)).col(0);
}

PenaltyResult gsp_penalty(GspDiscriminator& discriminator, std::span<const double> scores, const Matrix& a, const Matrix& a_prime)
{
    if (a.rows() != a_prime.rows()) {
        throw DimensionError("a and a_prime row counts differ");
    }
    const auto r = adversarial_objective(discriminator.net, discriminator.inputs(scores, a), discriminator.inputs(scores, a_prime), nullptr);
    return {r.value, score_gradient(r.input_grad)};
}

double RatioTable::lookup(const Eigen::RowVectorXd& a, double y) const
{
    const auto it = ratios.find(cell_key(a, y));
    return it == ratios.end() ? 1.0 : it->second;
}

DensityRatioEstimator DensityRatioEstimator::neural(Mlp net, std::size_t attribute_width)
{
    if (net.input_width() != attribute_width + 1) {
        throw DimensionError("density-ratio network expects " + std::to_string(net.input_width()) + " inputs, attributes give "
            + std::to_string(attribute_width + 1));
    }
    DensityRatioEstimator e;
    e.kind_ = Kind::neural;
    e.frozen_ = false;
    e.attribute_width_ = attribute_width;
    e.net_ = std::move(net);
    return e;
}

DensityRatioEstimator DensityRatioEstimator::table(RatioTable table)
{
    DensityRatioEstimator e;
    e.kind_ = Kind::table;
    e.attribute_width_ = table.attribute_width;
    e.table_ = std::move(table);
    return e;
}

DensityRatioEstimator DensityRatioEstimator::unit()
{
    return {};
}

Matrix DensityRatioEstimator::inputs(const Matrix& a, const Vector& y) const
{
    return append_outcome(a, y);
}

double DensityRatioEstimator::beta(const Eigen::RowVectorXd& a, double y) const
{
    switch (kind_) {
    case Kind::neural: {
        Matrix row(1, a.size() + 1);
        row.leftCols(a.size()) = a;
        row(0, a.size()) = y;
        return beta_value(net_.predict(row)(0, 0));
    }
    case Kind::table:
        return table_.lookup(a, y);
    case Kind::unit:
        return 1.0;
    }
    return 1.0;
}

Vector DensityRatioEstimator::beta(const Matrix& a, const Vector& y) const
{
    if (kind_ == Kind::neural) {
        const Matrix p = net_.predict(inputs(a, y));
        return p.col(0).unaryExpr([](double v) { return beta_value(v); });
    }
    Vector out(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        out[i] = beta(Eigen::RowVectorXd(a.row(i)), y[i]);
    }
    return out;
}

double beta_value(double classifier_probability)
{
    const double p = clamp_probability(classifier_probability);
    return p / (1.0 - p);
}

double beta_value(const DensityRatioEstimator& estimator, const Eigen::RowVectorXd& a, double y)
{
    if (!estimator.frozen()) {
        throw StateError("density-ratio estimator is not frozen");
    }
    return estimator.beta(a, y);
}

std::string to_string(BetaPlacement placement)
{
    return placement == BetaPlacement::observed_pair ? "observed" : "resampled";
}

BetaPlacement beta_placement_from_string(const std::string& name)
{
    if (name == "observed") {
        return BetaPlacement::observed_pair;
    }
    if (name == "resampled") {
        return BetaPlacement::resampled_pair;
    }
    throw std::invalid_argument("unknown beta placement '" + name + "' (expected observed or resampled)");
}

PenaltyResult geo_penalty(GeoDiscriminator& discriminator, const DensityRatioEstimator& beta, std::span<const double> scores, const Matrix& a,
    const Vector& y, const Matrix& a_prime, BetaPlacement placement)
{
    if (!beta.frozen()) {
        throw StateError("geo_penalty requires a frozen density-ratio estimator");
    }
    if (a.rows() != a_prime.rows() || a.rows() != y.size()) {
        throw DimensionError("a, a_prime and y row counts differ");
    }
    const Vector weights = beta.beta(placement == BetaPlacement::observed_pair ? a : a_prime, y);
    const auto r = adversarial_objective(discriminator.net, discriminator.inputs(scores, a, y), discriminator.inputs(scores, a_prime, y), &weights);
    return {r.value, score_gradient(r.input_grad)};
}

DensityRatioEstimator pretrain_density_ratio(const TabularDataset& dataset, const RatioTrainConfig& config)
{
    if (dataset.l() == 0) {
        throw ValidationError("density-ratio pre-training needs sensitive columns");
    }
    Rng init = Rng::derive(config.seed, streams::ratio_init);
    Rng batch_rng = Rng::derive(config.seed, streams::ratio_batching);
    Rng sampler_rng = Rng::derive(config.seed, streams::ratio_sampler);

    auto estimator = DensityRatioEstimator::neural(make_mlp(MlpSpec {dataset.l() + 1, config.hidden, false, Activation::sigmoid}, init), dataset.l());
    const SgdOptimizer optimizer {config.learning_rate};
    const std::size_t batch = std::min(config.batch_size, dataset.n());
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const Minibatch mb = minibatch_construct(dataset, batch, config.sampler, batch_rng, sampler_rng);
        adversarial_objective(estimator.net(), append_outcome(mb.a, mb.y), append_outcome(mb.a_prime, mb.y), nullptr);
        sgd_step(estimator.net(), optimizer, Direction::maximize);
    }
    estimator.freeze();
    return estimator;
}

DensityRatioEstimator empirical_pmf_ratio(const TabularDataset& dataset)
{
    if (!dataset.attributes_discrete() || dataset.outcome_kind() != OutcomeKind::binary) {
        throw ValidationError("empirical_pmf_ratio needs discrete sensitive columns and a binary outcome");
    }
    std::map<std::vector<double>, double> joint;
    std::map<std::vector<double>, double> a_counts;
    std::map<double, double> y_counts;
    for (Eigen::Index i = 0; i < dataset.a().rows(); ++i) {
        const Eigen::RowVectorXd a = dataset.a().row(i);
        const double y = dataset.y()[i];
        joint[cell_key(a, y)] += 1.0;
        a_counts[std::vector<double>(a.data(), a.data() + a.size())] += 1.0;
        y_counts[y] += 1.0;
    }
    const double n = static_cast<double>(dataset.n());
    RatioTable table;
    table.attribute_width = dataset.l();
    for (const auto& [key, count] : joint) {
        const std::vector<double> a_key(key.begin(), key.end() - 1);
        table.ratios[key] = count * n / (a_counts[a_key] * y_counts[key.back()]);
    }
    return DensityRatioEstimator::table(std::move(table));
}

Matrix optimal_gsp_discriminator_oracle(const Matrix& joint)
{
    if ((joint.array() < 0.0).any() || !joint.allFinite()) {
        throw ValidationError("joint pmf has negative or non-finite entries");
    }
    if (std::abs(joint.sum() - 1.0) > 1e-12) {
        throw ValidationError("joint pmf sums to " + std::to_string(joint.sum()) + ", not 1");
    }
    const Vector ps = joint.rowwise().sum();
    const Eigen::RowVectorXd pa = joint.colwise().sum();
    Matrix d(joint.rows(), joint.cols());
    for (Eigen::Index s = 0; s < joint.rows(); ++s) {
        for (Eigen::Index a = 0; a < joint.cols(); ++a) {
            const double product = ps[s] * pa[a];
            const double denom = joint(s, a) + product;
            d(s, a) = denom > 0.0 ? joint(s, a) / denom : 0.5;
        }
    }
    return d;
}

} // namespace fairpen

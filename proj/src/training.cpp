#include "fairpen/training.hpp"

#include <cmath>
#include <limits>

namespace fairpen {

std::string to_string(Task task)
{
    return task == Task::regression ? "regression" : "binary_classification";
}

std::string to_string(Criterion criterion)
{
    return criterion == Criterion::geo ? "geo" : "gsp";
}

std::string to_string(Scaling scaling)
{
    return scaling == Scaling::plain ? "plain" : "convex";
}

std::string to_string(RatioSource source)
{
    switch (source) {
    case RatioSource::neural:
        return "neural";
    case RatioSource::empirical:
        return "empirical";
    case RatioSource::unit:
        return "unit";
    }
    return "neural";
}

std::string to_string(Split split)
{
    return split == Split::train ? "train" : "validation";
}

Task task_from_string(const std::string& name)
{
    if (name == "binary_classification" || name == "classification") {
        return Task::binary_classification;
    }
    if (name == "regression") {
        return Task::regression;
    }
    throw ConfigError("unknown task '" + name + "'");
}

Criterion criterion_from_string(const std::string& name)
{
    if (name == "gsp") {
        return Criterion::gsp;
    }
    if (name == "geo") {
        return Criterion::geo;
    }
    throw ConfigError("unknown criterion '" + name + "' (expected gsp or geo)");
}

Scaling scaling_from_string(const std::string& name)
{
    if (name == "convex") {
        return Scaling::convex;
    }
    if (name == "plain") {
        return Scaling::plain;
    }
    throw ConfigError("unknown scaling '" + name + "' (expected convex or plain)");
}

RatioSource ratio_source_from_string(const std::string& name)
{
    if (name == "neural") {
        return RatioSource::neural;
    }
    if (name == "empirical") {
        return RatioSource::empirical;
    }
    if (name == "unit") {
        return RatioSource::unit;
    }
    throw ConfigError("unknown ratio source '" + name + "' (expected neural, empirical or unit)");
}

void TrainConfig::validate() const
{
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be positive");
    }
    if (iterations < 1 || discriminator_steps < 1 || ratio_iterations < 1 || batch_size < 1 || eval_interval < 1) {
        throw ConfigError("iteration counts, batch size and eval interval must be at least 1");
    }
}

namespace {

std::span<const double> as_span(const Vector& v)
{
    return {v.data(), static_cast<std::size_t>(v.size())};
}

template <typename F>
std::optional<double> defined(F&& compute)
{
    try {
        return compute();
    } catch (const UndefinedMetricError&) {
        return std::nullopt;
    }
}

} // namespace

FairnessReport evaluate_snapshot(const Mlp& model, const TabularDataset& dataset, Task task)
{
    const Vector scores = model.predict(dataset.x()).col(0);
    const Vector& y = dataset.y();
    const auto s = as_span(scores);
    const auto ys = as_span(y);

    FairnessReport report;
    std::vector<double> values;
    if (task == Task::binary_classification) {
        report.utility_name = "auc";
        report.utility = defined([&] { return auc(s, ys); }).value_or(std::numeric_limits<double>::quiet_NaN());
        try {
            report.threshold = choose_threshold(s, ys);
        } catch (const UndefinedMetricError&) {
            report.threshold = -std::numeric_limits<double>::infinity();
        }
        values = apply_threshold(s, report.threshold);
    } else {
        report.utility_name = "mae";
        report.utility = defined([&] { return mae(s, ys); }).value_or(std::numeric_limits<double>::quiet_NaN());
        report.threshold = std::numeric_limits<double>::quiet_NaN();
        values.assign(s.begin(), s.end());
    }

    const bool y_continuous = dataset.outcome_kind() == OutcomeKind::continuous;
    const std::optional<QuantileGrid> y_grid = y_continuous ? std::optional(QuantileGrid::of(ys)) : std::nullopt;
    const std::size_t y_groups = y_continuous ? y_grid->size() : group_count(ys);

    for (std::size_t j = 0; j < dataset.l(); ++j) {
        const auto& meta = dataset.attributes()[j];
        const Vector a = dataset.a().col(static_cast<Eigen::Index>(j));
        const auto as = as_span(a);
        AttributeFairness af;
        af.name = meta.name;
        af.continuous = meta.continuous;
        if (meta.continuous) {
            const QuantileGrid grid = QuantileGrid::of(as);
            af.sp = defined([&] { return sp_continuous(values, as, grid); });
            af.ks_gsp = defined([&] { return ks_gsp(s, as, grid); });
            af.eo = defined([&] { return eo_continuous(values, as, ys, grid, y_grid); });
            af.ks_geo = defined([&] { return ks_geo(s, as, ys, grid, y_grid); });
            af.gsp_groups = grid.size();
        } else {
            af.sp = defined([&] { return sp_discrete(values, as); });
            af.ks_gsp = defined([&] { return ks_gsp(s, as); });
            af.eo = defined([&] { return eo_discrete(values, as, ys, y_grid); });
            af.ks_geo = defined([&] { return ks_geo(s, as, ys, std::nullopt, y_grid); });
            af.gsp_groups = group_count(as);
        }
        af.geo_groups = af.gsp_groups * y_groups;
        report.attributes.push_back(std::move(af));
    }
    return report;
}

namespace {

// Runs the alternating loop. penalty(mb, scores) evaluates the penalty on the
// current discriminator, filling its gradient buffers.
template <typename Penalty>
TrainResult alternate(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, Mlp& discriminator_net, const TrainConfig& config,
    const TrainHooks& hooks, Penalty&& penalty)
{
    config.validate();
    if (model.output_width() != 1) {
        throw ConfigError("model must have a single output");
    }
    if (model.input_width() != train_set.p()) {
        throw ConfigError("model expects " + std::to_string(model.input_width()) + " features, data has " + std::to_string(train_set.p()));
    }

    Rng batch_rng = Rng::derive(config.seed, streams::batching);
    Rng sampler_rng = Rng::derive(config.seed, streams::sampler);
    const SgdOptimizer optimizer {config.learning_rate};
    const double loss_weight = config.scaling == Scaling::convex ? 1.0 - config.lambda : 1.0;
    const double penalty_weight = config.lambda;

    TrainResult result;
    for (std::size_t t = 1; t <= config.iterations; ++t) {
        const Minibatch mb = minibatch_construct(train_set, config.batch_size, config.sampler, batch_rng, sampler_rng);
        const Vector scores = model.forward(mb.x, Mode::train).col(0);
        const auto s = as_span(scores);

        for (std::size_t k = 0; k < config.discriminator_steps; ++k) {
            penalty(mb, s);
            sgd_step(discriminator_net, optimizer, Direction::maximize);
            if (hooks.on_update) {
                hooks.on_update({t, UpdateEvent::Kind::discriminator});
            }
        }

        const PenaltyResult pen = penalty(mb, s);
        discriminator_net.zero_grad();
        const LossResult loss = config.task == Task::binary_classification ? bce_loss(s, as_span(mb.y)) : mae_loss(s, as_span(mb.y));
        Matrix upstream(scores.size(), 1);
        upstream.col(0) = loss_weight * loss.grad + penalty_weight * pen.grad_scores;
        model.backward(upstream);
        sgd_step(model, optimizer, Direction::minimize);
        if (hooks.on_update) {
            hooks.on_update({t, UpdateEvent::Kind::model});
        }

        if (t % config.eval_interval == 0 || t == config.iterations) {
            const std::string id = "iter-" + std::to_string(t);
            result.snapshots.push_back({t, Split::train, evaluate_snapshot(model, train_set, config.task), id});
            result.snapshots.push_back({t, Split::validation, evaluate_snapshot(model, val_set, config.task), id});
            if (hooks.on_snapshot) {
                const auto n = result.snapshots.size();
                hooks.on_snapshot(result.snapshots[n - 2], result.snapshots[n - 1], model);
            }
        }
    }
    result.model = std::move(model);
    return result;
}

} // namespace

TrainResult train_gsp(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GspDiscriminator discriminator,
    const TrainConfig& config, const TrainHooks& hooks)
{
    if (discriminator.net.input_width() != 1 + train_set.l()) {
        throw ConfigError("GSP discriminator expects " + std::to_string(discriminator.net.input_width()) + " inputs, scores and attributes give "
            + std::to_string(1 + train_set.l()));
    }
    auto result = alternate(train_set, val_set, std::move(model), discriminator.net, config, hooks,
        [&](const Minibatch& mb, std::span<const double> s) { return gsp_penalty(discriminator, s, mb.a, mb.a_prime); });
    result.discriminator = std::move(discriminator.net);
    return result;
}

TrainResult train_geo_with_ratio(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GeoDiscriminator discriminator,
    DensityRatioEstimator beta, const TrainConfig& config, const TrainHooks& hooks)
{
    if (discriminator.net.input_width() != 2 + train_set.l()) {
        throw ConfigError("GEO discriminator expects " + std::to_string(discriminator.net.input_width()) + " inputs, scores, attributes and outcome give "
            + std::to_string(2 + train_set.l()));
    }
    if (!beta.frozen()) {
        throw StateError("density-ratio estimator must be frozen before the GEO loop");
    }
    auto result = alternate(train_set, val_set, std::move(model), discriminator.net, config, hooks, [&](const Minibatch& mb, std::span<const double> s) {
        return geo_penalty(discriminator, beta, s, mb.a, mb.y, mb.a_prime, config.beta_placement);
    });
    result.discriminator = std::move(discriminator.net);
    result.beta = std::move(beta);
    return result;
}

TrainResult train_geo(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GeoDiscriminator discriminator,
    const TrainConfig& config, const TrainHooks& hooks)
{
    config.validate();
    DensityRatioEstimator beta = DensityRatioEstimator::unit();
    switch (config.ratio_source) {
    case RatioSource::neural:
        beta = pretrain_density_ratio(train_set,
            RatioTrainConfig {config.ratio_iterations, config.batch_size, config.learning_rate, config.seed, config.sampler, config.ratio_hidden});
        break;
    case RatioSource::empirical:
        beta = empirical_pmf_ratio(train_set);
        break;
    case RatioSource::unit:
        break;
    }
    return train_geo_with_ratio(train_set, val_set, std::move(model), std::move(discriminator), std::move(beta), config, hooks);
}

Architecture Architecture::defaults_for(Task task)
{
    Architecture arch;
    arch.width = task == Task::regression ? 16 : 64;
    return arch;
}

Mlp make_model(std::size_t input_width, const Architecture& arch, Task task, std::uint64_t seed)
{
    Rng rng = Rng::derive(seed, streams::init);
    MlpSpec spec;
    spec.input_width = input_width;
    spec.hidden.assign(arch.model_layers, arch.width);
    spec.batch_norm = arch.batch_norm;
    spec.head = task == Task::regression ? Activation::identity : Activation::sigmoid;
    return make_mlp(spec, rng);
}

GspDiscriminator make_gsp_discriminator(std::size_t attribute_width, const Architecture& arch, std::uint64_t seed)
{
    Rng rng = Rng::derive(seed, streams::discriminator_init);
    return GspDiscriminator::make(attribute_width, std::vector<std::size_t>(arch.discriminator_layers, arch.width), arch.batch_norm, rng);
}

GeoDiscriminator make_geo_discriminator(std::size_t attribute_width, const Architecture& arch, std::uint64_t seed)
{
    Rng rng = Rng::derive(seed, streams::discriminator_init);
    return GeoDiscriminator::make(attribute_width, std::vector<std::size_t>(arch.discriminator_layers, arch.width), arch.batch_norm, rng);
}

} // namespace fairpen

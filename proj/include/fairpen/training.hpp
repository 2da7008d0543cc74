#pragma once

#include "fairpen/data.hpp"
#include "fairpen/metrics.hpp"
#include "fairpen/nn.hpp"
#include "fairpen/penalties.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fairpen {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Task { binary_classification, regression };
enum class Criterion { gsp, geo };
// convex: (1 - lambda) * loss + lambda * penalty; plain: loss + lambda * penalty.
enum class Scaling { convex, plain };
// Source of the density-ratio weights for the GEO penalty.
enum class RatioSource { neural, empirical, unit };

std::string to_string(Task task);
std::string to_string(Criterion criterion);
std::string to_string(Scaling scaling);
std::string to_string(RatioSource source);
Task task_from_string(const std::string& name);
Criterion criterion_from_string(const std::string& name);
Scaling scaling_from_string(const std::string& name);
RatioSource ratio_source_from_string(const std::string& name);

struct TrainConfig {
    double lambda = 0.5;
    double learning_rate = 0.005;
    std::size_t iterations = 1000;         // T
    std::size_t discriminator_steps = 1;   // T'
    std::size_t ratio_iterations = 1000;   // L
    std::size_t batch_size = 100;
    std::size_t eval_interval = 100;
    std::uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::within_batch;
    Task task = Task::binary_classification;
    Scaling scaling = Scaling::convex;
    RatioSource ratio_source = RatioSource::neural;
    BetaPlacement beta_placement = BetaPlacement::observed_pair;
    std::vector<std::size_t> ratio_hidden {64, 64};

    void validate() const;
};

struct AttributeFairness {
    std::string name;
    bool continuous = false;
    std::optional<double> sp;
    std::optional<double> ks_gsp;
    std::optional<double> eo;
    std::optional<double> ks_geo;
    std::size_t gsp_groups = 0; // terms in the discrete sums
    std::size_t geo_groups = 0;
};

struct FairnessReport {
    std::string utility_name; // "auc" or "mae"
    double utility = 0.0;     // NaN when undefined
    double threshold = 0.0;   // tau used for SP/EO (classification)
    std::vector<AttributeFairness> attributes;
};

enum class Split { train, validation };
std::string to_string(Split split);

struct Snapshot {
    std::size_t iteration = 0;
    Split split = Split::validation;
    FairnessReport report;
    std::string checkpoint_id;
};

struct TrainResult {
    std::vector<Snapshot> snapshots;
    Mlp model;
    Mlp discriminator;
    std::optional<DensityRatioEstimator> beta;
};

struct UpdateEvent {
    enum class Kind { discriminator, model };
    std::size_t iteration = 0;
    Kind kind = Kind::model;
};

struct TrainHooks {
    std::function<void(const UpdateEvent&)> on_update;
    // Called after each snapshot pair with the model in its current state.
    std::function<void(const Snapshot& train, const Snapshot& validation, const Mlp& model)> on_snapshot;
};

// Every utility and fairness metric for the model's inference-mode scores on
// one dataset. Metrics that are undefined on the data are left empty.
FairnessReport evaluate_snapshot(const Mlp& model, const TabularDataset& dataset, Task task);

// Alternating min-max with the GSP penalty: per iteration one minibatch,
// T' discriminator ascent steps on it, then one model descent step.
TrainResult train_gsp(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GspDiscriminator discriminator,
    const TrainConfig& config, const TrainHooks& hooks = {});

// Density-ratio pre-training (or the configured ratio source) followed by the
// alternating loop with the weighted GEO penalty.
TrainResult train_geo(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GeoDiscriminator discriminator,
    const TrainConfig& config, const TrainHooks& hooks = {});

// Same loop with a caller-supplied estimator (skips phase one).
TrainResult train_geo_with_ratio(const TabularDataset& train_set, const TabularDataset& val_set, Mlp model, GeoDiscriminator discriminator,
    DensityRatioEstimator beta, const TrainConfig& config, const TrainHooks& hooks = {});

struct Architecture {
    std::size_t width = 64;
    std::size_t model_layers = 3;
    std::size_t discriminator_layers = 2;
    bool batch_norm = true;

    // Classification: 64-wide blocks with a sigmoid head; regression: 16-wide
    // blocks with an identity head.
    static Architecture defaults_for(Task task);
};

// Seeded model and discriminators drawn from the master seed's init streams.
Mlp make_model(std::size_t input_width, const Architecture& arch, Task task, std::uint64_t seed);
GspDiscriminator make_gsp_discriminator(std::size_t attribute_width, const Architecture& arch, std::uint64_t seed);
GeoDiscriminator make_geo_discriminator(std::size_t attribute_width, const Architecture& arch, std::uint64_t seed);

} // namespace fairpen

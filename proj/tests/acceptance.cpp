// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "fairpen/cli.hpp"
#include "fairpen/oracles.hpp"
#include "fairpen/training.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

using namespace fairpen;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::vector<double> parameters(const Mlp& net)
{
    std::vector<double> out;
    net.for_each_parameter([&](std::span<const double> p, std::span<const double>) { out.insert(out.end(), p.begin(), p.end()); });
    return out;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng.uniform(-1.0, 1.0);
        }
    }
    return m;
}

const DiscreteJoint& toy_joint()
{
    static const DiscreteJoint joint({{0, 1}, {0, 1}, {0, 1}}, {0.20, 0.05, 0.08, 0.07, 0.05, 0.10, 0.12, 0.33});
    return joint;
}

Verdict ratio_toy_reproduction()
{
    const auto truth = table5_true_ratios();
    double total = 0.0;
    double slowest = 0.0;
    std::ostringstream per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto start = Clock::now();
        RatioToyConfig config;
        config.seed = seed;
        const auto rows = run_ratio_toy(config);
        slowest = std::max(slowest, seconds_since(start));
        double seed_error = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k].true_ratio != truth[k]) {
                return {false, "true ratio mismatch in row " + rows[k].cell};
            }
            seed_error += rows[k].abs_error;
        }
        total += seed_error;
        per_seed << (seed ? " " : "") << fixed(seed_error / 4.0);
    }
    const double pooled = total / 20.0;
    return {pooled < 0.02 && slowest < 120.0,
        "pooled MAE " + fixed(pooled) + " over 5 seeds x 4 cells (per seed " + per_seed.str() + "), slowest seed " + fixed(slowest, 1) + " s"};
}

Verdict gsp_optimum()
{
    const DiscreteJoint joint({{0, 1}, {0, 1}}, {0.4, 0.1, 0.1, 0.4});
    Matrix pmf(2, 2);
    pmf << 0.4, 0.1, 0.1, 0.4;
    const Matrix exact = optimal_gsp_discriminator_oracle(pmf);
    double worst = 0.0;
    double slowest = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto start = Clock::now();
        const TabularDataset data = sample_joint_dataset(joint, 10000, seed);
        GspDiscriminator d = make_gsp_discriminator(1, Architecture {}, seed);
        Rng batch_rng = Rng::derive(seed, streams::batching);
        Rng sampler_rng = Rng::derive(seed, streams::sampler);
        const SgdOptimizer optimizer {0.005};
        for (int t = 0; t < 10000; ++t) {
            const Minibatch mb = minibatch_construct(data, 100, SamplerKind::within_batch, batch_rng, sampler_rng);
            gsp_penalty(d, {mb.x.data(), static_cast<std::size_t>(mb.x.rows())}, mb.a, mb.a_prime);
            sgd_step(d.net, optimizer, Direction::maximize);
        }
        const std::vector<double> s {0, 0, 1, 1};
        Matrix a(4, 1);
        a << 0, 1, 0, 1;
        const Vector p = d.probabilities(s, a);
        for (int k = 0; k < 4; ++k) {
            worst = std::max(worst, std::abs(p[k] - exact(k / 2, k % 2)));
        }
        slowest = std::max(slowest, seconds_since(start));
    }
    return {worst <= 0.05 && slowest < 60.0,
        "worst |D - D*| " + fixed(worst) + " over 3 seeds (D*(0,0)=" + fixed(exact(0, 0)) + ", D*(0,1)=" + fixed(exact(0, 1)) + "), slowest " + fixed(slowest, 1) + " s"};
}

Verdict geo_optimum()
{
    const DiscreteJoint& joint = toy_joint();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const TabularDataset data = sample_joint_dataset(joint, 10000, seed);
        const DensityRatioEstimator beta = empirical_pmf_ratio(data);
        GeoDiscriminator d = make_geo_discriminator(1, Architecture {}, seed);
        Rng batch_rng = Rng::derive(seed, streams::batching);
        Rng sampler_rng = Rng::derive(seed, streams::sampler);
        const SgdOptimizer optimizer {0.005};
        for (int t = 0; t < 10000; ++t) {
            const Minibatch mb = minibatch_construct(data, 100, SamplerKind::within_batch, batch_rng, sampler_rng);
            geo_penalty(d, beta, {mb.x.data(), static_cast<std::size_t>(mb.x.rows())}, mb.a, mb.y, mb.a_prime, BetaPlacement::resampled_pair);
            sgd_step(d.net, optimizer, Direction::maximize);
        }
        const auto exact = exact_geo_discriminator_oracle(joint, [&](std::size_t a, std::size_t y) {
            Eigen::RowVectorXd row(1);
            row[0] = static_cast<double>(a);
            return beta_value(beta, row, static_cast<double>(y));
        });
        for (std::size_t cell = 0; cell < joint.cells(); ++cell) {
            const auto idx = joint.index_of_cell(cell);
            const std::vector<double> s {static_cast<double>(idx[0])};
            Matrix a(1, 1);
            a(0, 0) = static_cast<double>(idx[1]);
            Vector y(1);
            y[0] = static_cast<double>(idx[2]);
            worst = std::max(worst, std::abs(d.probabilities(s, a, y)[0] - exact[cell]));
        }
    }
    return {worst <= 0.05, "worst |D - D*| " + fixed(worst) + " over 8 cells x 3 seeds (beta from empirical pmf, resampled-pair weighting)"};
}

// Random stack of dense, batch-norm and activation layers with random
// parameters, so every layer kind and head is exercised.
Mlp random_network(Rng& rng, std::size_t input, Activation head)
{
    std::vector<Layer> layers;
    std::size_t width = input;
    const std::size_t depth = 1 + rng.uniform_index(3);
    for (std::size_t k = 0; k < depth; ++k) {
        const std::size_t next = 2 + rng.uniform_index(5);
        DenseLayer dense(width, next);
        dense.weights = random_matrix(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(width), rng);
        dense.bias = random_matrix(static_cast<Eigen::Index>(next), 1, rng).col(0);
        layers.emplace_back(dense);
        if (rng.bernoulli(0.5)) {
            BatchNormLayer bn(next);
            bn.gamma = random_matrix(static_cast<Eigen::Index>(next), 1, rng).col(0).array() + 1.5;
            bn.beta_shift = random_matrix(static_cast<Eigen::Index>(next), 1, rng).col(0);
            layers.emplace_back(bn);
        }
        ActivationLayer act;
        act.kind = static_cast<Activation>(rng.uniform_index(3));
        layers.emplace_back(act);
        width = next;
    }
    DenseLayer out(width, 1);
    out.weights = random_matrix(1, static_cast<Eigen::Index>(width), rng);
    out.bias = random_matrix(1, 1, rng).col(0);
    layers.emplace_back(out);
    ActivationLayer act;
    act.kind = head;
    layers.emplace_back(act);
    return Mlp(std::move(layers));
}

Verdict gradient_suite()
{
    Rng rng(2024);
    double worst = 0.0;
    std::set<std::string> kinds;
    std::size_t checked = 0;
    std::size_t zero = 0;
    for (int config = 0; config < 20; ++config) {
        const bool bce = config % 2 == 0;
        const std::size_t input = 1 + rng.uniform_index(4);
        const Eigen::Index rows = 3 + static_cast<Eigen::Index>(rng.uniform_index(6));
        Mlp net = random_network(rng, input, bce ? Activation::sigmoid : (rng.bernoulli(0.5) ? Activation::identity : Activation::sigmoid));
        Matrix x = random_matrix(rows, static_cast<Eigen::Index>(input), rng);
        while (support::relu_margin(net, x) < 1e-3) {
            x = random_matrix(rows, static_cast<Eigen::Index>(input), rng);
        }
        for (const auto& layer : net.layers()) {
            if (std::holds_alternative<DenseLayer>(layer)) {
                kinds.insert("dense");
            } else if (std::holds_alternative<BatchNormLayer>(layer)) {
                kinds.insert("batchnorm");
            } else {
                kinds.insert(to_string(std::get<ActivationLayer>(layer).kind));
            }
        }

        const Matrix out = net.forward(x, Mode::train);
        std::vector<double> targets;
        for (Eigen::Index i = 0; i < rows; ++i) {
            // MAE targets sit away from the prediction so the subgradient is smooth.
            targets.push_back(bce ? static_cast<double>(rng.bernoulli(0.5)) : out(i, 0) + (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0));
        }
        const auto check = support::gradient_check(net, x, bce ? support::bce_head(targets) : support::mae_head(targets));
        worst = std::max({worst, check.worst_param, check.worst_input});
        checked += check.checked;
        zero += check.zero_partials;
        kinds.insert(bce ? "bce" : "mae");
    }
    std::string covered;
    for (const auto& k : kinds) {
        covered += (covered.empty() ? "" : ",") + k;
    }
    const bool all_kinds = kinds.size() == 7;
    return {worst < 1e-4 && all_kinds, "worst relative error " + fixed(worst * 1e6, 3) + "e-6 over " + std::to_string(checked) + " partials (" + std::to_string(zero) + " zero up to rounding), covered " + covered};
}

Verdict lambda_zero_equivalence()
{
    const auto [train, validation] = split_train_val(synth_bias({2000, 2.0, 1.0, 7, false}), 0.8, 7);
    std::size_t compared = 0;
    for (Scaling scaling : {Scaling::convex, Scaling::plain}) {
        TrainConfig config;
        config.lambda = 0.0;
        config.iterations = 200;
        config.eval_interval = 1;
        config.discriminator_steps = 2;
        config.seed = 7;
        config.scaling = scaling;
        const Architecture arch;

        std::vector<std::vector<double>> trajectory;
        TrainHooks hooks;
        hooks.on_snapshot = [&](const Snapshot&, const Snapshot&, const Mlp& model) { trajectory.push_back(parameters(model)); };
        train_gsp(train, validation, make_model(train.p(), arch, config.task, config.seed), make_gsp_discriminator(train.l(), arch, config.seed), config, hooks);

        Mlp model = make_model(train.p(), arch, config.task, config.seed);
        Rng batch_rng = Rng::derive(config.seed, streams::batching);
        Rng sampler_rng = Rng::derive(config.seed, streams::sampler);
        const SgdOptimizer optimizer {config.learning_rate};
        for (std::size_t t = 0; t < config.iterations; ++t) {
            const Minibatch mb = minibatch_construct(train, config.batch_size, config.sampler, batch_rng, sampler_rng);
            const Vector s = model.forward(mb.x, Mode::train).col(0);
            const LossResult loss = bce_loss({s.data(), static_cast<std::size_t>(s.size())}, {mb.y.data(), static_cast<std::size_t>(mb.y.size())});
            model.backward(Matrix(loss.grad));
            sgd_step(model, optimizer, Direction::minimize);
            const auto p = parameters(model);
            if (t >= trajectory.size() || p.size() != trajectory[t].size() || std::memcmp(p.data(), trajectory[t].data(), p.size() * sizeof(double)) != 0) {
                return {false, "trajectories diverge at iteration " + std::to_string(t + 1) + " (" + to_string(scaling) + " scaling)"};
            }
            ++compared;
        }
    }
    return {true, "parameters bit-identical at all " + std::to_string(compared) + " iterations (convex and plain scaling, T'=2)"};
}

Verdict tradeoff()
{
    int agree = 0;
    double slowest = 0.0;
    std::ostringstream runs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto [train, validation] = split_train_val(synth_bias({10000, 3.0, 1.0, seed, false}), 0.8, seed);
        double auc_at[2];
        double ks_at[2];
        int k = 0;
        for (double lambda : {0.1, 0.9}) {
            const auto start = Clock::now();
            TrainConfig config;
            config.lambda = lambda;
            config.iterations = 2000;
            config.eval_interval = 2000;
            config.seed = seed;
            const Architecture arch;
            const auto result = train_gsp(train, validation, make_model(train.p(), arch, config.task, seed), make_gsp_discriminator(train.l(), arch, seed), config);
            const auto& report = result.snapshots.back().report;
            auc_at[k] = report.utility;
            ks_at[k] = report.attributes.at(0).ks_gsp.value_or(std::nan(""));
            slowest = std::max(slowest, seconds_since(start));
            ++k;
        }
        const bool ok = ks_at[1] < ks_at[0] && auc_at[1] <= auc_at[0];
        agree += ok ? 1 : 0;
        runs << " s" << seed << ":KS " << fixed(ks_at[0], 3) << "->" << fixed(ks_at[1], 3) << ",AUC " << fixed(auc_at[0], 3) << "->" << fixed(auc_at[1], 3);
    }
    return {agree >= 3 && slowest < 600.0, std::to_string(agree) + "/5 seeds with lower KS-GSP and no higher AUC at lambda 0.9;" + runs.str() + "; slowest run "
            + fixed(slowest, 1) + " s"};
}

std::vector<double> instance(Rng& rng, std::size_t n, int kind)
{
    std::vector<double> v(n);
    for (double& x : v) {
        switch (kind) {
        case 0: x = rng.uniform01(); break;
        case 1: x = std::floor(rng.uniform01() * 4.0) / 4.0; break;
        default: x = rng.bernoulli(0.5) ? 1.0 : 0.0; break;
        }
    }
    return v;
}

Verdict metric_oracles()
{
    Rng rng(777);
    std::size_t comparisons = 0;
    std::size_t defined = 0;
    std::size_t failures = 0;
    std::string first_failure;
    auto compare = [&](const char* name, auto lib, auto oracle) {
        ++comparisons;
        bool lib_defined = true;
        try {
            lib();
        } catch (const UndefinedMetricError&) {
            lib_defined = false;
        }
        defined += lib_defined ? 1 : 0;
        if (!support::agree(lib, oracle)) {
            ++failures;
            if (first_failure.empty()) {
                first_failure = name;
            }
        }
    };
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(49);
        const auto s = instance(rng, n, trial % 2);
        const auto a = instance(rng, n, 2);
        const auto y = instance(rng, n, 2);
        const auto ac = instance(rng, n, trial % 3 == 0 ? 1 : 0);
        const auto yc = instance(rng, n, trial % 5 == 0 ? 1 : 0);
        const auto yhat = apply_threshold(s, 0.5);
        const auto ga = QuantileGrid::of(ac);
        const auto gy = QuantileGrid::of(yc);

        compare("auc", [&] { return auc(s, y); }, [&] { return support::oracle_auc(s, y); });
        compare("sp_discrete", [&] { return sp_discrete(yhat, a); }, [&] { return support::oracle_sp_discrete(yhat, a); });
        compare("sp_continuous", [&] { return sp_continuous(yhat, ac, ga); }, [&] { return support::oracle_sp_continuous(yhat, ac); });
        compare("sp_continuous_scores", [&] { return sp_continuous(s, ac, ga); }, [&] { return support::oracle_sp_continuous(s, ac); });
        compare("eo_discrete", [&] { return eo_discrete(yhat, a, y); }, [&] { return support::oracle_eo(yhat, a, y, false, false); });
        compare("eo_discrete_ygrid", [&] { return eo_discrete(s, a, yc, gy); }, [&] { return support::oracle_eo(s, a, yc, false, true); });
        compare("eo_continuous", [&] { return eo_continuous(yhat, ac, y, ga); }, [&] { return support::oracle_eo(yhat, ac, y, true, false); });
        compare("eo_continuous_ygrid", [&] { return eo_continuous(s, ac, yc, ga, gy); }, [&] { return support::oracle_eo(s, ac, yc, true, true); });
        compare("ks_gsp", [&] { return ks_gsp(s, a); }, [&] { return support::oracle_ks_gsp(s, a, false); });
        compare("ks_gsp_grid", [&] { return ks_gsp(s, ac, ga); }, [&] { return support::oracle_ks_gsp(s, ac, true); });
        compare("ks_geo", [&] { return ks_geo(s, a, y); }, [&] { return support::oracle_ks_geo(s, a, y, false, false); });
        compare("ks_geo_agrid", [&] { return ks_geo(s, ac, y, ga); }, [&] { return support::oracle_ks_geo(s, ac, y, true, false); });
        compare("ks_geo_grids", [&] { return ks_geo(s, ac, yc, ga, gy); }, [&] { return support::oracle_ks_geo(s, ac, yc, true, true); });
    }
    return {failures == 0,
        std::to_string(comparisons - failures) + "/" + std::to_string(comparisons) + " agree to 1e-12 on 1000 instances (" + std::to_string(defined)
            + " defined, rest undefined on both sides)" + (first_failure.empty() ? "" : "; first mismatch " + first_failure)};
}

Verdict pareto_correctness()
{
    const std::vector<ParetoPoint> example {{0.5, 0.5}, {0.4, 0.4}, {0.6, 0.4}};
    const bool example_ok = pareto_frontier(example) == std::vector<ParetoPoint> {{0.6, 0.4}} && pareto_flags(example) == std::vector<bool> {false, false, true};
    Rng rng(99);
    int matched = 0;
    for (int cloud = 0; cloud < 100; ++cloud) {
        std::vector<ParetoPoint> pts;
        const bool coarse = cloud % 2 == 0;
        for (int i = 0; i < 100; ++i) {
            const double u = rng.uniform01();
            const double f = rng.uniform01();
            pts.push_back(coarse ? ParetoPoint {std::round(u * 10) / 10, std::round(f * 10) / 10} : ParetoPoint {u, f});
        }
        const auto flags = pareto_flags(pts);
        const auto oracle = support::oracle_pareto(pts);
        std::vector<ParetoPoint> expected;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (oracle[i] && std::find(expected.begin(), expected.end(), pts[i]) == expected.end()) {
                expected.push_back(pts[i]);
            }
        }
        std::sort(expected.begin(), expected.end(), [](const auto& p, const auto& q) { return p.utility < q.utility; });
        matched += flags == oracle && pareto_frontier(pts) == expected ? 1 : 0;
    }
    return {example_ok && matched == 100,
        std::to_string(matched) + "/100 clouds match the O(n^2) dominance check; three-point example " + (example_ok ? "gives {(0.6,0.4)}" : "WRONG")};
}

TabularDataset noisy_toy(std::uint64_t seed)
{
    const TabularDataset base = sample_joint_dataset(toy_joint(), 10000, seed);
    Rng noise = Rng::derive(seed, streams::data + 100);
    Matrix x(static_cast<Eigen::Index>(base.n()), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = base.x()(i, 0) + 0.5 * noise.normal();
        x(i, 1) = noise.normal();
    }
    return TabularDataset(std::move(x), base.a(), base.y(), {"x1", "x2"}, {true, true}, {{"a", "a", false}}, OutcomeKind::binary, "y");
}

Verdict beta_ablation()
{
    double worst = 0.0;
    std::ostringstream runs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto [train, validation] = split_train_val(noisy_toy(seed), 0.8, seed);
        double ks[2];
        int k = 0;
        for (RatioSource source : {RatioSource::neural, RatioSource::unit}) {
            TrainConfig config;
            config.lambda = 0.5;
            config.iterations = 2000;
            config.ratio_iterations = 2000;
            config.eval_interval = 2000;
            config.seed = seed;
            config.ratio_source = source;
            const Architecture arch;
            const auto result = train_geo(train, validation, make_model(train.p(), arch, config.task, seed), make_geo_discriminator(train.l(), arch, seed), config);
            ks[k++] = result.snapshots.back().report.attributes.at(0).ks_geo.value_or(std::nan(""));
        }
        const double gap = std::abs(ks[0] - ks[1]);
        worst = std::isnan(gap) ? gap : std::max(worst, gap);
        runs << " s" << seed << ":" << fixed(ks[0], 3) << "/" << fixed(ks[1], 3);
    }
    return {worst <= 0.05, "largest |KS-GEO(beta) - KS-GEO(unit)| " + fixed(worst) + " over 3 seeds (beta/unit:" + runs.str() + ")"};
}

struct CliRun {
    int code = 0;
    std::string err;
};

CliRun cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "fairpen");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism()
{
    const fs::path root = fs::path(FAIRPEN_TEST_TMP) / "acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto data = synth_bias({1500, 2.0, 1.0, 21, false});
    {
        std::ofstream csv(root / "data.csv");
        csv << "x1,x2,x3,group,label\n";
        for (Eigen::Index i = 0; i < data.x().rows(); ++i) {
            csv << format_number(data.x()(i, 0)) << ',' << format_number(data.x()(i, 1)) << ',' << format_number(data.x()(i, 2)) << ','
                << format_number(data.a()(i, 0)) << ',' << format_number(data.y()[i]) << '\n';
        }
        std::ofstream(root / "schema.json") << R"({"columns": [
  {"name": "x1", "role": "feature", "kind": "continuous"},
  {"name": "x2", "role": "feature", "kind": "continuous"},
  {"name": "x3", "role": "feature", "kind": "continuous"},
  {"name": "group", "role": "sensitive", "kind": "binary"},
  {"name": "label", "role": "outcome", "kind": "binary"}
]})";
        std::ofstream(root / "run.ini") << "[data]\npath = data.csv\nschema = schema.json\n[model]\nwidth = 16\n"
                                           "[train]\niterations = 200\neval_interval = 50\nratio_iterations = 200\nseed = 5\nlambda = 0.2, 0.8\n"
                                           "[output]\ndir = runs\n";
    }
    const std::string config = (root / "run.ini").string();

    std::vector<std::pair<std::string, std::string>> files; // (first, second)
    std::vector<std::string> names;
    for (int pass = 0; pass < 2; ++pass) {
        // The second pass runs the lambda grid on a single worker.
        if (pass == 1) {
            setenv("FAIRPEN_THREADS", "1", 1);
        }
        const std::string tag = "pass" + std::to_string(pass);
        const fs::path out = root / tag;
        std::vector<fs::path> produced;
        for (const char* criterion : {"gsp", "geo"}) {
            const auto r = cli({"train", "--config", config, "--criterion", criterion, "--out", (out / "runs").string(), "--run-id", criterion});
            if (r.code != 0) {
                return {false, "train " + std::string(criterion) + " failed: " + r.err};
            }
            for (const char* lambda : {"lambda=0.2", "lambda=0.8"}) {
                produced.push_back(out / "runs" / criterion / lambda / "snapshots.csv");
            }
        }
        produced.push_back(out / "runs" / "geo" / "lambda=0.2" / "beta_table.csv");
        const auto ev = cli({"evaluate", "--config", config, "--checkpoint", (out / "runs" / "gsp" / "lambda=0.2" / "h.ckpt").string(), "--split", "all", "--out",
            (out / "evaluate.csv").string()});
        if (ev.code != 0) {
            return {false, "evaluate failed: " + ev.err};
        }
        produced.push_back(out / "evaluate.csv");
        const auto pa = cli({"pareto", (root / "pass0" / "runs" / "gsp" / "lambda=0.2" / "snapshots.csv").string(),
            (root / "pass0" / "runs" / "gsp" / "lambda=0.8" / "snapshots.csv").string(), "--threshold", "0.5", "--out", (out / "pareto.csv").string(), "--summary",
            (out / "summary.csv").string()});
        if (pa.code != 0) {
            return {false, "pareto failed: " + pa.err};
        }
        produced.push_back(out / "pareto.csv");
        produced.push_back(out / "summary.csv");
        const auto rt = cli({"ratio-toy", "--n", "2000", "-L", "500", "--seed", "3", "--out", (out / "ratio_toy.csv").string()});
        if (rt.code != 0) {
            return {false, "ratio-toy failed: " + rt.err};
        }
        produced.push_back(out / "ratio_toy.csv");

        for (std::size_t i = 0; i < produced.size(); ++i) {
            if (pass == 0) {
                files.emplace_back(slurp(produced[i]), "");
                names.push_back(fs::relative(produced[i], out).string());
            } else {
                files[i].second = slurp(produced[i]);
            }
        }
    }
    unsetenv("FAIRPEN_THREADS");
    std::size_t identical = 0;
    std::string mismatch;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!files[i].first.empty() && files[i].first == files[i].second) {
            ++identical;
        } else if (mismatch.empty()) {
            mismatch = names[i];
        }
    }
    return {identical == files.size(), std::to_string(identical) + "/" + std::to_string(files.size())
            + " CSVs byte-identical across reruns (train gsp/geo, beta table, evaluate, pareto, summary, ratio-toy; second pass single-threaded)"
            + (mismatch.empty() ? "" : "; differs: " + mismatch)};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria {
        {"Density-ratio toy reproduction", ratio_toy_reproduction},
        {"GSP discriminator matches the exact optimum", gsp_optimum},
        {"GEO discriminator matches the exact optimum", geo_optimum},
        {"finite-difference gradient suite", gradient_suite},
        {"lambda = 0 equals plain loss training", lambda_zero_equivalence},
        {"fairness-utility trade-off", tradeoff},
        {"metric oracle equivalence", metric_oracles},
        {"Pareto frontier correctness", pareto_correctness},
        {"density-ratio ablation", beta_ablation},
        {"CLI determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id)) {
            continue;
        }
        const auto start = Clock::now();
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += v.pass ? 0 : 1;
        std::cout << "AC" << id << ' ' << (v.pass ? "PASS" : "FAIL") << "  " << criteria[k].first << ": " << v.detail << " [" << fixed(seconds_since(start), 1) << " s]"
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}

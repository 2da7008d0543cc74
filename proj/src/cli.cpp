#include "fairpen/cli.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace fairpen {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& text)
{
    const std::string v = trim(text);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

// Drops a trailing "; ..." or "# ..." that follows whitespace.
std::string strip_inline_comment(const std::string& value)
{
    for (std::size_t i = 1; i < value.size(); ++i) {
        if ((value[i] == ';' || value[i] == '#') && (value[i - 1] == ' ' || value[i - 1] == '\t')) {
            return trim(value.substr(0, i));
        }
    }
    return value;
}

double parse_double(const std::string& key, const std::string& text)
{
    const std::string v = trim(text);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& text)
{
    const std::string v = trim(text);
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

void check_lambdas(const std::vector<double>& lambdas)
{
    if (lambdas.empty()) {
        throw ConfigError("at least one lambda value is required");
    }
    for (double v : lambdas) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ConfigError("lambda values must lie in [0, 1], got " + format_number(v));
        }
    }
}

const std::set<std::string> known_keys {
    "data.path", "data.schema", "data.train_fraction",
    "model.task", "model.width", "model.model_layers", "model.discriminator_layers", "model.batch_norm",
    "train.criterion", "train.lambda", "train.learning_rate", "train.iterations", "train.discriminator_steps",
    "train.ratio_iterations", "train.batch_size", "train.eval_interval", "train.seed", "train.sampler", "train.scaling",
    "train.ratio_source", "train.beta_placement", "train.ratio_hidden",
    "output.dir", "output.run_id", "output.snapshot_checkpoints",
};

} // namespace

RunSettings load_settings(const fs::path& config_path)
{
    pt::ptree tree;
    try {
        pt::read_ini(config_path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("cannot read config " + config_path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }

    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError(config_path.string() + ": key '" + section + "' is outside any section");
        }
        for (const auto& [key, value] : body) {
            if (!known_keys.contains(section + "." + key)) {
                throw ConfigError(config_path.string() + ": unknown key '" + key + "' in section [" + section + "]");
            }
        }
    }

    RunSettings s;
    s.config_path = config_path;
    const fs::path base = config_path.parent_path();
    auto get = [&](const std::string& key) {
        auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (v) {
            *v = strip_inline_comment(*v);
        }
        return v;
    };
    auto relative = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    if (auto v = get("data.path")) {
        s.data_path = relative(trim(*v));
    }
    if (auto v = get("data.schema")) {
        s.schema_path = relative(trim(*v));
    }
    if (auto v = get("data.train_fraction")) {
        s.train_fraction = parse_double("data.train_fraction", *v);
    }

    if (auto v = get("model.task")) {
        s.task = task_from_string(trim(*v));
    }
    if (auto v = get("model.width")) {
        s.architecture.width = parse_count("model.width", *v);
        s.architecture_width_set = true;
    }
    if (auto v = get("model.model_layers")) {
        s.architecture.model_layers = parse_count("model.model_layers", *v);
    }
    if (auto v = get("model.discriminator_layers")) {
        s.architecture.discriminator_layers = parse_count("model.discriminator_layers", *v);
    }
    if (auto v = get("model.batch_norm")) {
        s.architecture.batch_norm = parse_bool("model.batch_norm", *v);
    }

    TrainConfig& t = s.train;
    if (auto v = get("train.criterion")) {
        s.criterion = criterion_from_string(trim(*v));
    }
    if (auto v = get("train.lambda")) {
        s.lambdas.clear();
        for (const auto& item : split_list(*v)) {
            s.lambdas.push_back(parse_double("train.lambda", item));
        }
    }
    if (auto v = get("train.learning_rate")) {
        t.learning_rate = parse_double("train.learning_rate", *v);
    }
    if (auto v = get("train.iterations")) {
        t.iterations = parse_count("train.iterations", *v);
    }
    if (auto v = get("train.discriminator_steps")) {
        t.discriminator_steps = parse_count("train.discriminator_steps", *v);
    }
    if (auto v = get("train.ratio_iterations")) {
        t.ratio_iterations = parse_count("train.ratio_iterations", *v);
    }
    if (auto v = get("train.batch_size")) {
        t.batch_size = parse_count("train.batch_size", *v);
    }
    if (auto v = get("train.eval_interval")) {
        t.eval_interval = parse_count("train.eval_interval", *v);
    }
    if (auto v = get("train.seed")) {
        t.seed = parse_count("train.seed", *v);
    }
    if (auto v = get("train.sampler")) {
        t.sampler = sampler_from_string(trim(*v));
    }
    if (auto v = get("train.scaling")) {
        t.scaling = scaling_from_string(trim(*v));
    }
    if (auto v = get("train.ratio_source")) {
        t.ratio_source = ratio_source_from_string(trim(*v));
    }
    if (auto v = get("train.beta_placement")) {
        t.beta_placement = beta_placement_from_string(trim(*v));
    }
    if (auto v = get("train.ratio_hidden")) {
        t.ratio_hidden.clear();
        for (const auto& item : split_list(*v)) {
            t.ratio_hidden.push_back(parse_count("train.ratio_hidden", item));
        }
    }

    if (auto v = get("output.dir")) {
        s.out_dir = relative(trim(*v));
    }
    if (auto v = get("output.run_id")) {
        s.run_id = trim(*v);
    }
    if (auto v = get("output.snapshot_checkpoints")) {
        s.snapshot_checkpoints = parse_bool("output.snapshot_checkpoints", *v);
    }
    return s;
}

std::string format_number(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

std::string lambda_directory(double lambda)
{
    return "lambda=" + format_number(lambda);
}

std::vector<std::string> report_columns(const FairnessReport& report)
{
    std::vector<std::string> cols {"utility_name", "utility_value"};
    for (const auto& af : report.attributes) {
        for (const char* suffix : {"_sp", "_ks_gsp", "_eo", "_ks_geo", "_gsp_groups", "_geo_groups"}) {
            cols.push_back(af.name + suffix);
        }
    }
    cols.push_back("threshold");
    return cols;
}

std::vector<std::string> report_values(const FairnessReport& report)
{
    const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("nan"); };
    std::vector<std::string> row {report.utility_name, format_number(report.utility)};
    for (const auto& af : report.attributes) {
        row.push_back(opt(af.sp));
        row.push_back(opt(af.ks_gsp));
        row.push_back(opt(af.eo));
        row.push_back(opt(af.ks_geo));
        row.push_back(std::to_string(af.gsp_groups));
        row.push_back(std::to_string(af.geo_groups));
    }
    row.push_back(format_number(report.threshold));
    return row;
}

std::vector<std::string> snapshot_header(const FairnessReport& report)
{
    std::vector<std::string> cols {"iteration", "split"};
    const auto rest = report_columns(report);
    cols.insert(cols.end(), rest.begin(), rest.end());
    cols.push_back("checkpoint_id");
    return cols;
}

std::vector<std::string> snapshot_row(const Snapshot& snapshot)
{
    std::vector<std::string> row {std::to_string(snapshot.iteration), to_string(snapshot.split)};
    const auto rest = report_values(snapshot.report);
    row.insert(row.end(), rest.begin(), rest.end());
    row.push_back(snapshot.checkpoint_id);
    return row;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out << ',';
        }
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out << '"';
            for (char c : f) {
                if (c == '"') {
                    out << '"';
                }
                out << c;
            }
            out << '"';
        } else {
            out << f;
        }
    }
    out << '\n';
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    field += c;
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else {
                field += c;
            }
        }
        fields.push_back(std::move(field));
        rows.push_back(std::move(fields));
    }
    return rows;
}

std::pair<TabularDataset, TabularDataset> prepare_split(const RunSettings& settings)
{
    if (settings.data_path.empty()) {
        throw ConfigError("no dataset given (--data or [data] path)");
    }
    if (settings.schema_path.empty()) {
        throw ConfigError("no schema given (--schema or [data] schema)");
    }
    const Schema schema = Schema::load(settings.schema_path);
    const TabularDataset data = load_csv(settings.data_path, schema);
    return split_train_val(data, settings.train_fraction, settings.train.seed);
}

Task resolve_task(const RunSettings& settings, const TabularDataset& data)
{
    if (settings.task) {
        return *settings.task;
    }
    return data.outcome_kind() == OutcomeKind::continuous ? Task::regression : Task::binary_classification;
}

namespace {

Architecture resolve_architecture(const RunSettings& settings, Task task)
{
    Architecture arch = settings.architecture;
    if (!settings.architecture_width_set) {
        arch.width = Architecture::defaults_for(task).width;
    }
    return arch;
}

std::string join(const std::vector<std::string>& items, const std::string& sep)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i ? sep : "") + items[i];
    }
    return out;
}

void write_settings(const RunSettings& s, Task task, const Architecture& arch, double lambda, const fs::path& path)
{
    pt::ptree tree;
    tree.put("data.path", fs::absolute(s.data_path).string());
    tree.put("data.schema", fs::absolute(s.schema_path).string());
    tree.put("data.train_fraction", format_number(s.train_fraction));
    tree.put("model.task", to_string(task));
    tree.put("model.width", arch.width);
    tree.put("model.model_layers", arch.model_layers);
    tree.put("model.discriminator_layers", arch.discriminator_layers);
    tree.put("model.batch_norm", arch.batch_norm ? "true" : "false");
    const TrainConfig& t = s.train;
    tree.put("train.criterion", to_string(s.criterion));
    tree.put("train.lambda", format_number(lambda));
    tree.put("train.learning_rate", format_number(t.learning_rate));
    tree.put("train.iterations", t.iterations);
    tree.put("train.discriminator_steps", t.discriminator_steps);
    tree.put("train.ratio_iterations", t.ratio_iterations);
    tree.put("train.batch_size", t.batch_size);
    tree.put("train.eval_interval", t.eval_interval);
    tree.put("train.seed", t.seed);
    tree.put("train.sampler", to_string(t.sampler));
    tree.put("train.scaling", to_string(t.scaling));
    tree.put("train.ratio_source", to_string(t.ratio_source));
    tree.put("train.beta_placement", to_string(t.beta_placement));
    std::vector<std::string> hidden;
    for (auto w : t.ratio_hidden) {
        hidden.push_back(std::to_string(w));
    }
    tree.put("train.ratio_hidden", join(hidden, ","));
    pt::write_ini(path.string(), tree);
}

void write_beta_table(const TabularDataset& train, const DensityRatioEstimator& beta, const fs::path& path)
{
    std::set<std::vector<double>> a_rows;
    std::set<double> y_values;
    for (Eigen::Index i = 0; i < train.a().rows(); ++i) {
        const Eigen::RowVectorXd r = train.a().row(i);
        a_rows.insert(std::vector<double>(r.data(), r.data() + r.size()));
        y_values.insert(train.y()[i]);
    }
    std::ofstream out(path);
    std::vector<std::string> header;
    for (const auto& attr : train.attributes()) {
        header.push_back(attr.name);
    }
    header.push_back(train.outcome_name());
    header.push_back("ratio");
    write_csv_row(out, header);
    for (const auto& a : a_rows) {
        for (double y : y_values) {
            const Eigen::RowVectorXd row = Eigen::Map<const Eigen::RowVectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
            std::vector<std::string> fields;
            for (double v : a) {
                fields.push_back(format_number(v));
            }
            fields.push_back(format_number(y));
            fields.push_back(format_number(beta.beta(row, y)));
            write_csv_row(out, fields);
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

std::size_t thread_cap()
{
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FAIRPEN_THREADS")) {
        const std::string text(env);
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || v == 0) {
            throw ConfigError("FAIRPEN_THREADS must be a positive integer, got '" + text + "'");
        }
        cap = v;
    }
    return cap;
}

void train_one(const RunSettings& settings, const TabularDataset& train_set, const TabularDataset& val_set, Task task, const Architecture& arch,
    double lambda, const fs::path& dir)
{
    fs::create_directories(dir);
    write_settings(settings, task, arch, lambda, dir / "settings.ini");

    TrainConfig config = settings.train;
    config.lambda = lambda;
    config.task = task;

    std::ofstream snapshots(dir / "snapshots.csv");
    if (!snapshots) {
        throw std::runtime_error("cannot create " + (dir / "snapshots.csv").string());
    }
    bool header_written = false;
    TrainHooks hooks;
    hooks.on_snapshot = [&](const Snapshot& tr, const Snapshot& va, const Mlp& model) {
        if (!header_written) {
            write_csv_row(snapshots, snapshot_header(tr.report));
            header_written = true;
        }
        write_csv_row(snapshots, snapshot_row(tr));
        write_csv_row(snapshots, snapshot_row(va));
        snapshots.flush();
        if (!snapshots) {
            throw std::runtime_error("failed writing " + (dir / "snapshots.csv").string());
        }
        if (settings.snapshot_checkpoints) {
            fs::create_directories(dir / "checkpoints");
            save_checkpoint(model, dir / "checkpoints" / (tr.checkpoint_id + ".ckpt"));
        }
    };

    Mlp model = make_model(train_set.p(), arch, task, config.seed);
    TrainResult result;
    if (settings.criterion == Criterion::gsp) {
        result = train_gsp(train_set, val_set, std::move(model), make_gsp_discriminator(train_set.l(), arch, config.seed), config, hooks);
    } else {
        result = train_geo(train_set, val_set, std::move(model), make_geo_discriminator(train_set.l(), arch, config.seed), config, hooks);
    }
    save_checkpoint(result.model, dir / "h.ckpt");
    save_checkpoint(result.discriminator, dir / "d.ckpt");
    if (result.beta) {
        if (result.beta->kind() == DensityRatioEstimator::Kind::neural) {
            save_checkpoint(result.beta->net(), dir / "beta.ckpt");
        }
        if (train_set.attributes_discrete() && train_set.outcome_kind() == OutcomeKind::binary) {
            write_beta_table(train_set, *result.beta, dir / "beta_table.csv");
        }
    }
}

} // namespace

std::vector<fs::path> cmd_train(const RunSettings& settings, std::ostream& log)
{
    check_lambdas(settings.lambdas);
    if (settings.run_id.empty() || settings.run_id.find('/') != std::string::npos) {
        throw ConfigError("run_id must be a non-empty name without '/'");
    }
    if (!(settings.train_fraction > 0.0 && settings.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    TrainConfig probe = settings.train;
    probe.validate();

    std::vector<fs::path> dirs;
    std::set<std::string> seen;
    for (double lambda : settings.lambdas) {
        const std::string name = lambda_directory(lambda);
        if (!seen.insert(name).second) {
            throw ConfigError("duplicate lambda value " + format_number(lambda));
        }
        dirs.push_back(settings.out_dir / settings.run_id / name);
    }
    for (const auto& dir : dirs) {
        if (fs::exists(dir) && !settings.force) {
            throw ConfigError(dir.string() + " already exists; choose a new run_id or pass --force");
        }
    }

    const auto [train_set, val_set] = prepare_split(settings);
    const Task task = resolve_task(settings, train_set);
    const Architecture arch = resolve_architecture(settings, task);

    for (const auto& dir : dirs) {
        if (fs::exists(dir)) {
            fs::remove_all(dir);
        }
    }

    std::mutex log_mutex;
    std::vector<std::string> failures(dirs.size());
    std::atomic<std::size_t> next {0};
    auto worker = [&] {
        for (std::size_t i = next++; i < dirs.size(); i = next++) {
            try {
                train_one(settings, train_set, val_set, task, arch, settings.lambdas[i], dirs[i]);
                std::lock_guard lock(log_mutex);
                log << "finished " << dirs[i].string() << '\n';
            } catch (const std::exception& e) {
                failures[i] = e.what();
                std::lock_guard lock(log_mutex);
                log << "failed " << dirs[i].string() << ": " << e.what() << '\n';
            }
        }
    };
    const std::size_t n_threads = std::min(thread_cap(), dirs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n_threads; ++k) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    std::vector<std::string> failed;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        if (!failures[i].empty()) {
            failed.push_back(lambda_directory(settings.lambdas[i]) + ": " + failures[i]);
        }
    }
    if (!failed.empty()) {
        throw std::runtime_error("training failed for " + join(failed, "; "));
    }
    return dirs;
}

FairnessReport cmd_evaluate(const RunSettings& settings, const fs::path& checkpoint, EvalSplit split)
{
    const Mlp model = load_checkpoint(checkpoint);
    auto [train_set, val_set] = prepare_split(settings);
    if (model.input_width() != train_set.p()) {
        throw DimensionError("checkpoint " + checkpoint.string() + " expects " + std::to_string(model.input_width()) + " input features but "
            + settings.data_path.string() + " encodes to " + std::to_string(train_set.p()));
    }
    if (model.output_width() != 1) {
        throw DimensionError("checkpoint " + checkpoint.string() + " has " + std::to_string(model.output_width()) + " outputs, expected 1");
    }
    const Task task = resolve_task(settings, train_set);
    switch (split) {
    case EvalSplit::train:
        return evaluate_snapshot(model, train_set, task);
    case EvalSplit::validation:
        return evaluate_snapshot(model, val_set, task);
    case EvalSplit::all:
        break;
    }
    const TabularDataset full = load_csv(settings.data_path, Schema::load(settings.schema_path)).standardized(train_set.scaler());
    return evaluate_snapshot(model, full, task);
}

ParetoOutcome cmd_pareto(const std::vector<fs::path>& inputs, const ParetoOptions& options)
{
    if (inputs.empty()) {
        throw ConfigError("pareto needs at least one snapshot CSV");
    }
    std::vector<std::string> header;
    std::vector<std::pair<std::string, std::vector<std::string>>> pooled;
    for (const auto& path : inputs) {
        auto rows = read_csv_rows(path);
        if (rows.empty()) {
            throw IngestionError(path.string() + " is empty");
        }
        if (header.empty()) {
            header = rows.front();
        } else if (rows.front() != header) {
            const std::set<std::string> a(header.begin(), header.end());
            const std::set<std::string> b(rows.front().begin(), rows.front().end());
            std::vector<std::string> offending;
            std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(offending));
            if (offending.empty()) {
                for (std::size_t i = 0; i < header.size(); ++i) {
                    if (header[i] != rows.front()[i]) {
                        offending.push_back(header[i]);
                    }
                }
            }
            throw IngestionError("schema mismatch between " + inputs.front().string() + " and " + path.string() + "; offending columns: " + join(offending, ", "));
        }
        std::string run_id = path.parent_path().filename().string();
        const fs::path grand = path.parent_path().parent_path().filename();
        if (!grand.empty()) {
            run_id = grand.string() + "/" + run_id;
        }
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() != header.size()) {
                throw IngestionError(path.string() + " row " + std::to_string(r + 1) + ": expected " + std::to_string(header.size()) + " fields, got "
                    + std::to_string(rows[r].size()));
            }
            pooled.emplace_back(run_id, std::move(rows[r]));
        }
    }

    const auto column = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw IngestionError("snapshot CSVs have no column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    std::string fairness = options.fairness_column;
    if (fairness.empty()) {
        const auto it = std::find_if(header.begin(), header.end(), [](const std::string& c) { return c.ends_with("_ks_gsp"); });
        if (it == header.end()) {
            throw IngestionError("snapshot CSVs have no *_ks_gsp column; pass --fairness");
        }
        fairness = *it;
    }
    const std::size_t c_iter = column("iteration");
    const std::size_t c_split = column("split");
    const std::size_t c_name = column("utility_name");
    const std::size_t c_util = column("utility_value");
    const std::size_t c_fair = column(fairness);

    const auto number = [](const std::string& text) {
        if (text == "nan") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return parse_double("snapshot value", text);
    };

    ParetoOutcome outcome;
    std::vector<ParetoPoint> points;
    bool error_type = false;
    for (const auto& [run_id, row] : pooled) {
        if (row[c_split] != options.split) {
            continue;
        }
        ParetoRow pr;
        pr.run_id = run_id;
        pr.iteration = parse_count("iteration", row[c_iter]);
        pr.utility = number(row[c_util]);
        pr.fairness_metric_name = fairness;
        pr.fairness_value = number(row[c_fair]);
        error_type = row[c_name] == "mae";
        points.push_back({error_type ? -pr.utility : pr.utility, pr.fairness_value});
        outcome.rows.push_back(std::move(pr));
    }
    const auto flags = pareto_flags(points);
    for (std::size_t i = 0; i < flags.size(); ++i) {
        outcome.rows[i].on_frontier = flags[i];
    }
    if (options.utility_threshold) {
        const auto frontier = pareto_frontier(points);
        const double threshold = error_type ? -*options.utility_threshold : *options.utility_threshold;
        outcome.summary = topk_fair_summary(frontier, threshold, options.k);
    }
    return outcome;
}

void write_ratio_toy_csv(std::ostream& out, const std::vector<RatioToyRow>& rows)
{
    write_csv_row(out, {"cell", "true_ratio", "estimated_ratio", "abs_error"});
    for (const auto& r : rows) {
        write_csv_row(out, {r.cell, format_number(r.true_ratio), format_number(r.estimated_ratio), format_number(r.abs_error)});
    }
}

namespace {

template <typename F>
void with_output(const std::string& path, std::ostream& fallback, F&& emit)
{
    if (path.empty() || path == "-") {
        emit(fallback);
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    emit(out);
    if (!out) {
        throw std::runtime_error("failed writing " + path);
    }
}

struct CommonFlags {
    std::string config;
    std::string data;
    std::string schema;
    std::string out;
    std::uint64_t seed = 0;
    std::vector<double> lambdas;
    std::string criterion;
    std::string sampler;
    std::string scaling;
    bool force = false;

    CLI::Option* seed_opt = nullptr;

    void attach(CLI::App& cmd, bool training)
    {
        cmd.add_option("--config", config, "INI file with [data], [model], [train], [output] sections");
        cmd.add_option("--data", data, "CSV dataset");
        cmd.add_option("--schema", schema, "JSON column schema");
        seed_opt = cmd.add_option("--seed", seed, "master seed");
        if (training) {
            cmd.add_option("--out", out, "output directory");
            cmd.add_option("--lambda", lambdas, "trade-off weight in [0, 1]; repeat for a grid");
            cmd.add_option("--criterion", criterion, "gsp or geo")->check(CLI::IsMember({"gsp", "geo"}));
            cmd.add_option("--sampler", sampler, "within or disjoint")->check(CLI::IsMember({"within", "within_batch", "disjoint"}));
            cmd.add_option("--scaling", scaling, "convex or plain")->check(CLI::IsMember({"convex", "plain"}));
            cmd.add_flag("--force", force, "replace existing run directories");
        }
    }

    RunSettings settings() const
    {
        RunSettings s = config.empty() ? RunSettings {} : load_settings(config);
        if (!data.empty()) {
            s.data_path = data;
        }
        if (!schema.empty()) {
            s.schema_path = schema;
        }
        if (seed_opt && seed_opt->count() > 0) {
            s.train.seed = seed;
        }
        if (!out.empty()) {
            s.out_dir = out;
        }
        if (!lambdas.empty()) {
            s.lambdas = lambdas;
        }
        if (!criterion.empty()) {
            s.criterion = criterion_from_string(criterion);
        }
        if (!sampler.empty()) {
            s.train.sampler = sampler_from_string(sampler);
        }
        if (!scaling.empty()) {
            s.train.scaling = scaling_from_string(scaling);
        }
        s.force = force;
        return s;
    }
};

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app {"fairness-penalized training with sampling-based adversarial penalties", "fairpen"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    std::string run_id;
    std::size_t iterations = 0;
    CLI::App* train = app.add_subcommand("train", "train one model per lambda value");
    train_flags.attach(*train, true);
    auto* run_id_opt = train->add_option("--run-id", run_id, "run directory name under --out");
    auto* iter_opt = train->add_option("--iterations", iterations, "training iterations T")->check(CLI::PositiveNumber);

    CommonFlags eval_flags;
    std::string checkpoint;
    std::string split_name = "validation";
    std::string eval_out;
    CLI::App* evaluate = app.add_subcommand("evaluate", "report utility and fairness of a checkpoint");
    eval_flags.attach(*evaluate, false);
    evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    evaluate->add_option("--split", split_name, "train, validation or all")->check(CLI::IsMember({"train", "validation", "all"}));
    evaluate->add_option("--out", eval_out, "report CSV path (stdout when omitted)");

    std::vector<std::string> pareto_inputs;
    ParetoOptions pareto_options;
    double threshold = 0.0;
    std::string pareto_out;
    std::string summary_out;
    CLI::App* pareto = app.add_subcommand("pareto", "pool snapshot CSVs and flag the Pareto frontier");
    pareto->add_option("inputs", pareto_inputs, "snapshots.csv files")->required();
    pareto->add_option("--fairness", pareto_options.fairness_column, "fairness column (default: first *_ks_gsp)");
    pareto->add_option("--split", pareto_options.split, "snapshot split to use")->check(CLI::IsMember({"train", "validation"}));
    auto* threshold_opt = pareto->add_option("--threshold", threshold, "utility threshold for the top-k summary");
    pareto->add_option("--k", pareto_options.k, "number of fairest frontier points to summarize")->check(CLI::PositiveNumber);
    pareto->add_option("--out", pareto_out, "frontier CSV path (stdout when omitted)");
    pareto->add_option("--summary", summary_out, "top-k summary CSV path (stdout when omitted)");

    RatioToyConfig toy;
    std::string toy_sampler = "within";
    std::string toy_out;
    CLI::App* ratio_toy = app.add_subcommand("ratio-toy", "estimate density ratios on the two-cell toy law");
    ratio_toy->add_option("--n", toy.n, "sample size")->check(CLI::PositiveNumber);
    ratio_toy->add_option("--iterations,-L", toy.iterations, "training iterations")->check(CLI::PositiveNumber);
    ratio_toy->add_option("--batch", toy.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    ratio_toy->add_option("--lr", toy.learning_rate, "learning rate")->check(CLI::PositiveNumber);
    ratio_toy->add_option("--seed", toy.seed, "seed");
    ratio_toy->add_option("--sampler", toy_sampler, "within or disjoint")->check(CLI::IsMember({"within", "within_batch", "disjoint"}));
    ratio_toy->add_option("--out", toy_out, "CSV path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*train) {
            RunSettings s = train_flags.settings();
            if (run_id_opt->count() > 0) {
                s.run_id = run_id;
            }
            if (iter_opt->count() > 0) {
                s.train.iterations = iterations;
            }
            for (const auto& dir : cmd_train(s, err)) {
                out << dir.string() << '\n';
            }
        } else if (*evaluate) {
            const RunSettings s = eval_flags.settings();
            const EvalSplit split = split_name == "train" ? EvalSplit::train : split_name == "all" ? EvalSplit::all : EvalSplit::validation;
            const FairnessReport report = cmd_evaluate(s, checkpoint, split);
            with_output(eval_out, out, [&](std::ostream& o) {
                auto header = report_columns(report);
                header.insert(header.begin(), "split");
                auto row = report_values(report);
                row.insert(row.begin(), split_name);
                write_csv_row(o, header);
                write_csv_row(o, row);
            });
        } else if (*pareto) {
            if (threshold_opt->count() > 0) {
                pareto_options.utility_threshold = threshold;
            }
            std::vector<fs::path> inputs(pareto_inputs.begin(), pareto_inputs.end());
            const ParetoOutcome outcome = cmd_pareto(inputs, pareto_options);
            with_output(pareto_out, out, [&](std::ostream& o) {
                write_csv_row(o, {"run_id", "iteration", "utility", "fairness_metric_name", "fairness_value", "on_frontier"});
                for (const auto& r : outcome.rows) {
                    write_csv_row(o, {r.run_id, std::to_string(r.iteration), format_number(r.utility), r.fairness_metric_name, format_number(r.fairness_value),
                                         r.on_frontier ? "1" : "0"});
                }
            });
            if (outcome.summary) {
                with_output(summary_out, out, [&](std::ostream& o) {
                    const auto& sm = *outcome.summary;
                    write_csv_row(o, {"k", "count", "mean", "stddev"});
                    write_csv_row(o, {std::to_string(pareto_options.k), std::to_string(sm.count), sm.empty() ? "nan" : format_number(sm.mean),
                                         sm.empty() ? "nan" : format_number(sm.stddev)});
                });
            }
        } else if (*ratio_toy) {
            toy.sampler = sampler_from_string(toy_sampler);
            const auto rows = run_ratio_toy(toy);
            with_output(toy_out, out, [&](std::ostream& o) { write_ratio_toy_csv(o, rows); });
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace fairpen

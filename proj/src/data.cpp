#include "fairpen/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fairpen {

std::string to_string(ColumnRole role)
{
    switch (role) {
    case ColumnRole::feature:
        return "feature";
    case ColumnRole::sensitive:
        return "sensitive";
    case ColumnRole::outcome:
        return "outcome";
    }
    return "feature";
}

std::string to_string(ColumnKind kind)
{
    switch (kind) {
    case ColumnKind::continuous:
        return "continuous";
    case ColumnKind::binary:
        return "binary";
    case ColumnKind::categorical:
        return "categorical";
    }
    return "continuous";
}

std::string to_string(SamplerKind kind)
{
    return kind == SamplerKind::disjoint ? "disjoint" : "within";
}

SamplerKind sampler_from_string(const std::string& name)
{
    if (name == "within" || name == "within_batch") {
        return SamplerKind::within_batch;
    }
    if (name == "disjoint") {
        return SamplerKind::disjoint;
    }
    throw std::invalid_argument("unknown sampler '" + name + "' (expected within or disjoint)");
}

namespace {

ColumnRole role_from_string(const std::string& s)
{
    if (s == "feature") {
        return ColumnRole::feature;
    }
    if (s == "sensitive") {
        return ColumnRole::sensitive;
    }
    if (s == "outcome") {
        return ColumnRole::outcome;
    }
    throw IngestionError("schema: unknown role '" + s + "'");
}

ColumnKind kind_from_string(const std::string& s)
{
    if (s == "continuous") {
        return ColumnKind::continuous;
    }
    if (s == "binary") {
        return ColumnKind::binary;
    }
    if (s == "categorical") {
        return ColumnKind::categorical;
    }
    throw IngestionError("schema: unknown kind '" + s + "'");
}

} // namespace

void Schema::validate() const
{
    std::size_t outcomes = 0;
    std::size_t sensitive = 0;
    for (const auto& c : columns) {
        outcomes += c.role == ColumnRole::outcome ? 1 : 0;
        sensitive += c.role == ColumnRole::sensitive ? 1 : 0;
        if (c.kind == ColumnKind::categorical && c.categories.size() < 2) {
            throw IngestionError("schema: categorical column '" + c.name + "' needs at least two declared categories");
        }
        if (c.kind == ColumnKind::binary && !c.categories.empty() && c.categories.size() != 2) {
            throw IngestionError("schema: binary column '" + c.name + "' declares " + std::to_string(c.categories.size()) + " categories");
        }
        if (c.role == ColumnRole::outcome && c.kind == ColumnKind::categorical && c.categories.size() != 2) {
            throw IngestionError("schema: outcome column '" + c.name + "' must be binary or continuous");
        }
    }
    if (outcomes != 1) {
        throw IngestionError("schema: expected exactly one outcome column, found " + std::to_string(outcomes));
    }
    if (sensitive == 0) {
        throw IngestionError("schema: at least one sensitive column is required");
    }
}

Schema Schema::from_json_text(const std::string& text)
{
    Schema schema;
    try {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& col : doc.at("columns")) {
            ColumnSchema c;
            c.name = col.at("name").get<std::string>();
            c.role = role_from_string(col.at("role").get<std::string>());
            c.kind = kind_from_string(col.at("kind").get<std::string>());
            if (col.contains("categories")) {
                for (const auto& v : col.at("categories")) {
                    c.categories.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                }
            }
            schema.columns.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

Schema Schema::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open schema file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return from_json_text(buffer.str());
    } catch (const IngestionError& e) {
        throw IngestionError(path.string() + ": " + e.what());
    }
}

std::string Schema::to_json_text() const
{
    nlohmann::json doc;
    doc["columns"] = nlohmann::json::array();
    for (const auto& c : columns) {
        nlohmann::json col {{"name", c.name}, {"role", to_string(c.role)}, {"kind", to_string(c.kind)}};
        if (!c.categories.empty()) {
            col["categories"] = c.categories;
        }
        doc["columns"].push_back(col);
    }
    return doc.dump(2);
}

FeatureScaler FeatureScaler::fit(const Matrix& x, const std::vector<bool>& continuous_columns)
{
    FeatureScaler s;
    const Eigen::Index p = x.cols();
    s.mean = Vector::Zero(p);
    s.scale = Vector::Ones(p);
    const double n = static_cast<double>(x.rows());
    if (x.rows() == 0) {
        return s;
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!continuous_columns[static_cast<std::size_t>(j)]) {
            continue;
        }
        const double m = x.col(j).mean();
        const double var = (x.col(j).array() - m).square().sum() / n;
        s.mean[j] = m;
        s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Matrix FeatureScaler::apply(const Matrix& x) const
{
    Matrix out = x;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= scale.array().transpose();
    return out;
}

Matrix FeatureScaler::invert(const Matrix& standardized) const
{
    Matrix out = standardized;
    out.array().rowwise() *= scale.array().transpose();
    out.rowwise() += mean.transpose();
    return out;
}

TabularDataset::TabularDataset(Matrix x, Matrix a, Vector y, std::vector<std::string> feature_names, std::vector<bool> continuous_features,
    std::vector<AttributeColumn> attributes, OutcomeKind outcome_kind, std::string outcome_name)
    : x_(std::move(x))
    , a_(std::move(a))
    , y_(std::move(y))
    , feature_names_(std::move(feature_names))
    , continuous_features_(std::move(continuous_features))
    , attributes_(std::move(attributes))
    , outcome_kind_(outcome_kind)
    , outcome_name_(std::move(outcome_name))
{
    if (x_.rows() != y_.size() || a_.rows() != y_.size()) {
        throw DimensionError("dataset: X, A and Y row counts differ");
    }
    if (feature_names_.size() != p() || continuous_features_.size() != p()) {
        throw DimensionError("dataset: feature metadata does not match X width");
    }
    if (attributes_.size() != l()) {
        throw DimensionError("dataset: attribute metadata does not match A width");
    }
    if (!x_.allFinite() || !a_.allFinite() || !y_.allFinite()) {
        throw IngestionError("dataset: non-finite values");
    }
}

bool TabularDataset::attributes_discrete() const
{
    return std::none_of(attributes_.begin(), attributes_.end(), [](const AttributeColumn& c) { return c.continuous; });
}

TabularDataset TabularDataset::subset(const std::vector<std::size_t>& rows) const
{
    Matrix x(static_cast<Eigen::Index>(rows.size()), x_.cols());
    Matrix a(static_cast<Eigen::Index>(rows.size()), a_.cols());
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        const auto k = static_cast<Eigen::Index>(i);
        x.row(k) = x_.row(r);
        a.row(k) = a_.row(r);
        y[k] = y_[r];
    }
    TabularDataset out(std::move(x), std::move(a), std::move(y), feature_names_, continuous_features_, attributes_, outcome_kind_, outcome_name_);
    out.scaler_ = scaler_;
    return out;
}

TabularDataset TabularDataset::standardized(const FeatureScaler& scaler) const
{
    const Matrix raw = raw_features();
    TabularDataset out(scaler.apply(raw), a_, y_, feature_names_, continuous_features_, attributes_, outcome_kind_, outcome_name_);
    out.scaler_ = scaler;
    return out;
}

Matrix TabularDataset::raw_features() const
{
    return scaler_.fitted() ? scaler_.invert(x_) : x_;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
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
    return fields;
}

std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) {
        return false;
    }
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

struct CellLocation {
    const std::string& source;
    std::size_t row;
    const std::string& column;

    [[noreturn]] void fail(const std::string& what) const
    {
        throw IngestionError(source + ": row " + std::to_string(row) + ", column '" + column + "': " + what);
    }
};

// Index of the category, or -1.
int category_index(const ColumnSchema& col, const std::string& cell)
{
    const auto it = std::find(col.categories.begin(), col.categories.end(), cell);
    return it == col.categories.end() ? -1 : static_cast<int>(it - col.categories.begin());
}

double parse_binary(const ColumnSchema& col, const std::string& cell, const CellLocation& where)
{
    if (!col.categories.empty()) {
        const int idx = category_index(col, cell);
        if (idx < 0) {
            where.fail("unknown category '" + cell + "'");
        }
        return static_cast<double>(idx);
    }
    double v = 0.0;
    if (!parse_double(cell, v) || (v != 0.0 && v != 1.0)) {
        where.fail("expected 0 or 1, found '" + cell + "'");
    }
    return v;
}

void min_max_scale(Eigen::Ref<Vector> column)
{
    const double lo = column.minCoeff();
    const double hi = column.maxCoeff();
    if (hi > lo) {
        column = ((column.array() - lo) / (hi - lo)).matrix();
    } else {
        column.setZero();
    }
}

} // namespace

TabularDataset parse_csv(std::istream& in, const Schema& schema, const std::string& source_name)
{
    schema.validate();
    std::string line;
    if (!std::getline(in, line)) {
        throw IngestionError(source_name + ": missing header row");
    }
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) {
        h = trim(h);
    }
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) {
        header[0] = header[0].substr(3);
    }

    std::vector<std::size_t> position;
    for (const auto& col : schema.columns) {
        const auto it = std::find(header.begin(), header.end(), col.name);
        if (it == header.end()) {
            throw IngestionError(source_name + ": missing column '" + col.name + "' in header");
        }
        position.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    // Raw values per schema column; categorical columns hold category indices.
    std::vector<std::vector<double>> values(schema.columns.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        ++row;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw IngestionError(source_name + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, header has "
                + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const auto& col = schema.columns[c];
            const std::string cell = trim(fields[position[c]]);
            const CellLocation where {source_name, row, col.name};
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "?") {
                where.fail("missing value");
            }
            double v = 0.0;
            switch (col.kind) {
            case ColumnKind::continuous:
                if (!parse_double(cell, v)) {
                    where.fail("cannot parse '" + cell + "' as a number");
                }
                break;
            case ColumnKind::binary:
                v = parse_binary(col, cell, where);
                break;
            case ColumnKind::categorical: {
                const int idx = category_index(col, cell);
                if (idx < 0) {
                    where.fail("unknown category '" + cell + "'");
                }
                v = static_cast<double>(idx);
                break;
            }
            }
            values[c].push_back(v);
        }
    }
    if (row == 0) {
        throw IngestionError(source_name + ": no data rows");
    }

    std::vector<Vector> x_cols;
    std::vector<std::string> feature_names;
    std::vector<bool> continuous_features;
    std::vector<Vector> a_cols;
    std::vector<AttributeColumn> attributes;
    Vector y;
    OutcomeKind outcome_kind = OutcomeKind::binary;
    std::string outcome_name;

    const auto n = static_cast<Eigen::Index>(row);
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto& col = schema.columns[c];
        const Vector raw = Eigen::Map<const Vector>(values[c].data(), n);
        switch (col.role) {
        case ColumnRole::feature:
            if (col.kind == ColumnKind::categorical) {
                for (std::size_t k = 0; k < col.categories.size(); ++k) {
                    x_cols.push_back((raw.array() == static_cast<double>(k)).cast<double>().matrix());
                    feature_names.push_back(col.name + "=" + col.categories[k]);
                    continuous_features.push_back(false);
                }
            } else {
                x_cols.push_back(raw);
                feature_names.push_back(col.name);
                continuous_features.push_back(col.kind == ColumnKind::continuous);
            }
            break;
        case ColumnRole::sensitive:
            if (col.kind == ColumnKind::categorical && col.categories.size() > 2) {
                for (std::size_t k = 0; k < col.categories.size(); ++k) {
                    a_cols.push_back((raw.array() == static_cast<double>(k)).cast<double>().matrix());
                    attributes.push_back({col.name + "=" + col.categories[k], col.name, false});
                }
            } else {
                Vector v = raw;
                if (col.kind == ColumnKind::continuous) {
                    min_max_scale(v);
                }
                a_cols.push_back(std::move(v));
                attributes.push_back({col.name, col.name, col.kind == ColumnKind::continuous});
            }
            break;
        case ColumnRole::outcome:
            y = raw;
            outcome_name = col.name;
            if (col.kind == ColumnKind::continuous) {
                outcome_kind = OutcomeKind::continuous;
                min_max_scale(y);
            }
            break;
        }
    }

    Matrix x(n, static_cast<Eigen::Index>(x_cols.size()));
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
        x.col(static_cast<Eigen::Index>(j)) = x_cols[j];
    }
    Matrix a(n, static_cast<Eigen::Index>(a_cols.size()));
    for (std::size_t j = 0; j < a_cols.size(); ++j) {
        a.col(static_cast<Eigen::Index>(j)) = a_cols[j];
    }
    return TabularDataset(std::move(x), std::move(a), std::move(y), std::move(feature_names), std::move(continuous_features), std::move(attributes),
        outcome_kind, outcome_name);
}

TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema)
{
    std::ifstream in(path);
    if (!in) {
        throw IngestionError("cannot open data file " + path.string());
    }
    return parse_csv(in, schema, path.string());
}

std::pair<TabularDataset, TabularDataset> split_train_val(const TabularDataset& dataset, double fraction, std::uint64_t seed)
{
    const std::size_t n = dataset.n();
    if (n < 2) {
        throw SizeError("split_train_val needs at least 2 rows, got " + std::to_string(n));
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("split fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t {0});
    Rng rng = Rng::derive(seed, streams::split);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }
    auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    const std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> val_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    const TabularDataset train_raw = dataset.subset(train_rows);
    const FeatureScaler scaler = FeatureScaler::fit(train_raw.raw_features(), dataset.continuous_features());
    return {train_raw.standardized(scaler), dataset.subset(val_rows).standardized(scaler)};
}

Minibatch minibatch_construct(const TabularDataset& dataset, std::size_t batch_size, SamplerKind sampler, Rng& batch_rng, Rng& sampler_rng)
{
    const std::size_t n = dataset.n();
    if (batch_size == 0 || n < batch_size) {
        throw SizeError("minibatch of " + std::to_string(batch_size) + " rows requested from " + std::to_string(n));
    }
    if (sampler == SamplerKind::disjoint && n < 2 * batch_size) {
        throw SizeError("disjoint sampler needs n >= 2 * batch size (" + std::to_string(n) + " < " + std::to_string(2 * batch_size) + ")");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t {0});
    // Partial Fisher-Yates: positions [0, batch_size) form the batch.
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::swap(order[i], order[i + batch_rng.uniform_index(n - i)]);
    }

    Minibatch mb;
    mb.rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch_size));
    if (sampler == SamplerKind::disjoint) {
        for (std::size_t i = batch_size; i < 2 * batch_size; ++i) {
            std::swap(order[i], order[i + sampler_rng.uniform_index(n - i)]);
        }
        mb.prime_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(batch_size), order.begin() + static_cast<std::ptrdiff_t>(2 * batch_size));
    } else {
        mb.prime_rows = mb.rows;
        for (std::size_t i = batch_size - 1; i > 0; --i) {
            std::swap(mb.prime_rows[i], mb.prime_rows[sampler_rng.uniform_index(i + 1)]);
        }
    }

    const auto nb = static_cast<Eigen::Index>(batch_size);
    mb.x.resize(nb, dataset.x().cols());
    mb.a.resize(nb, dataset.a().cols());
    mb.y.resize(nb);
    mb.a_prime.resize(nb, dataset.a().cols());
    for (Eigen::Index i = 0; i < nb; ++i) {
        const auto r = static_cast<Eigen::Index>(mb.rows[static_cast<std::size_t>(i)]);
        mb.x.row(i) = dataset.x().row(r);
        mb.a.row(i) = dataset.a().row(r);
        mb.y[i] = dataset.y()[r];
        mb.a_prime.row(i) = dataset.a().row(static_cast<Eigen::Index>(mb.prime_rows[static_cast<std::size_t>(i)]));
    }
    return mb;
}

EmpiricalMarginal::EmpiricalMarginal(Matrix rows)
    : rows_(std::move(rows))
{
    if (rows_.rows() == 0) {
        throw SizeError("empirical marginal of an empty sample");
    }
}

Matrix EmpiricalMarginal::draw_rows(std::size_t count, Rng& rng) const
{
    Matrix out(static_cast<Eigen::Index>(count), rows_.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out.row(i) = rows_.row(static_cast<Eigen::Index>(draw_index(rng)));
    }
    return out;
}

EmpiricalMarginal marginal_of_A(const TabularDataset& dataset)
{
    return EmpiricalMarginal(dataset.a());
}

} // namespace fairpen

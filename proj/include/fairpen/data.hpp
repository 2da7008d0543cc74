#pragma once

#include "fairpen/nn.hpp"
#include "fairpen/rng.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairpen {

class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SizeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ColumnRole { feature, sensitive, outcome };
enum class ColumnKind { continuous, binary, categorical };

std::string to_string(ColumnRole role);
std::string to_string(ColumnKind kind);

struct ColumnSchema {
    std::string name;
    ColumnRole role = ColumnRole::feature;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<std::string> categories; // declared order defines the encoding
};

struct Schema {
    std::vector<ColumnSchema> columns;

    // Exactly one outcome, at least one sensitive column, categories declared
    // for categorical columns.
    void validate() const;

    // {"columns": [{"name": ..., "role": ..., "kind": ..., "categories": [...]}]}
    static Schema from_json_text(const std::string& text);
    static Schema load(const std::filesystem::path& path);
    std::string to_json_text() const;
};

// One encoded column of the sensitive matrix A. Continuous columns are
// min-max scaled to [0, 1]; discrete ones hold {0, 1} indicators.
struct AttributeColumn {
    std::string name;
    std::string source_column;
    bool continuous = false;
};

enum class OutcomeKind { binary, continuous };

// Per-column z-scoring of the continuous feature columns; other columns pass
// through (mean 0, scale 1).
struct FeatureScaler {
    Vector mean;
    Vector scale;

    static FeatureScaler fit(const Matrix& x, const std::vector<bool>& continuous_columns);
    Matrix apply(const Matrix& x) const;
    Matrix invert(const Matrix& standardized) const;
    bool fitted() const { return mean.size() > 0; }
};

class TabularDataset {
public:
    TabularDataset() = default;
    TabularDataset(Matrix x, Matrix a, Vector y, std::vector<std::string> feature_names, std::vector<bool> continuous_features,
        std::vector<AttributeColumn> attributes, OutcomeKind outcome_kind, std::string outcome_name = "y");

    const Matrix& x() const { return x_; }
    const Matrix& a() const { return a_; }
    const Vector& y() const { return y_; }
    std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
    std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }
    std::size_t l() const { return static_cast<std::size_t>(a_.cols()); }

    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<bool>& continuous_features() const { return continuous_features_; }
    const std::vector<AttributeColumn>& attributes() const { return attributes_; }
    OutcomeKind outcome_kind() const { return outcome_kind_; }
    const std::string& outcome_name() const { return outcome_name_; }
    const FeatureScaler& scaler() const { return scaler_; }

    bool attributes_discrete() const;

    TabularDataset subset(const std::vector<std::size_t>& rows) const;
    TabularDataset standardized(const FeatureScaler& scaler) const;
    // Features on their original scale (identity when never standardized).
    Matrix raw_features() const;

private:
    Matrix x_;
    Matrix a_;
    Vector y_;
    std::vector<std::string> feature_names_;
    std::vector<bool> continuous_features_;
    std::vector<AttributeColumn> attributes_;
    OutcomeKind outcome_kind_ = OutcomeKind::binary;
    std::string outcome_name_ = "y";
    FeatureScaler scaler_;
};

// Reads a comma-separated file with a header row. Features come back encoded
// but not yet standardized; split_train_val standardizes.
TabularDataset load_csv(const std::filesystem::path& path, const Schema& schema);
TabularDataset parse_csv(std::istream& in, const Schema& schema, const std::string& source_name = "<stream>");

// Seeded shuffle, floor(fraction * n) training rows, z-scoring fitted on the
// training rows and applied to both halves.
std::pair<TabularDataset, TabularDataset> split_train_val(const TabularDataset& dataset, double fraction, std::uint64_t seed);

enum class SamplerKind { within_batch, disjoint };

std::string to_string(SamplerKind kind);
SamplerKind sampler_from_string(const std::string& name);

struct Minibatch {
    Matrix x;
    Matrix a;
    Vector y;
    Matrix a_prime;
    std::vector<std::size_t> rows;       // dataset rows of (x, a, y)
    std::vector<std::size_t> prime_rows; // dataset rows the a_prime entries came from
};

// (x, a, y) rows are drawn without replacement from batch_rng. a_prime comes
// from sampler_rng: a second draw from the remaining rows (disjoint) or a
// permutation of the batch's own a rows (within_batch).
Minibatch minibatch_construct(const TabularDataset& dataset, std::size_t batch_size, SamplerKind sampler, Rng& batch_rng, Rng& sampler_rng);

// i.i.d. draws from the empirical distribution of the A rows.
class EmpiricalMarginal {
public:
    explicit EmpiricalMarginal(Matrix rows);

    std::size_t draw_index(Rng& rng) const { return rng.uniform_index(static_cast<std::size_t>(rows_.rows())); }
    Eigen::RowVectorXd draw(Rng& rng) const { return rows_.row(static_cast<Eigen::Index>(draw_index(rng))); }
    Matrix draw_rows(std::size_t count, Rng& rng) const;
    const Matrix& rows() const { return rows_; }

private:
    Matrix rows_;
};

EmpiricalMarginal marginal_of_A(const TabularDataset& dataset);

} // namespace fairpen

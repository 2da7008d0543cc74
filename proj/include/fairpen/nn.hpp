#pragma once

#include "fairpen/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fairpen {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class Mode { train, inference };
enum class Direction { minimize, maximize };
enum class Activation { relu, sigmoid, identity };

inline constexpr double kProbabilityFloor = 1e-7;

// Clamps a probability into [1e-7, 1 - 1e-7] before it reaches a logarithm.
double clamp_probability(double p);

double sigmoid(double z);

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
    Matrix weights; // out x in
    Vector bias;
    Matrix grad_weights;
    Vector grad_bias;
    Matrix cached_input;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out);

    std::size_t input_width() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t output_width() const { return static_cast<std::size_t>(weights.rows()); }
};

struct BatchNormLayer {
    Vector gamma;
    Vector beta_shift;
    Vector running_mean;
    Vector running_var;
    Vector grad_gamma;
    Vector grad_beta_shift;
    double momentum = 0.99;
    double epsilon = 1e-5;
    Mode mode = Mode::train;

    // Train-mode cache.
    Matrix normalized;
    Vector inv_std;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t width);

    std::size_t width() const { return static_cast<std::size_t>(gamma.size()); }
};

struct ActivationLayer {
    Activation kind = Activation::identity;
    Matrix cached_output;
    Matrix cached_input;
};

using Layer = std::variant<DenseLayer, BatchNormLayer, ActivationLayer>;

// Feed-forward stack of dense, batch-norm and activation layers with manual
// backpropagation. Parameters only change through sgd_step.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Layer> layers);

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t parameter_count() const;
    bool empty() const { return layers_.empty(); }

    // In train mode, caches per-layer inputs and updates batch-norm running
    // statistics.
    Matrix forward(const Matrix& batch, Mode mode);

    // Inference-mode forward that leaves the network untouched.
    Matrix predict(const Matrix& batch) const;

    // Accumulates parameter gradients for the last train-mode forward and
    // returns the gradient with respect to that forward's input.
    Matrix backward(const Matrix& upstream_grad);

    void zero_grad();

    // Visits each parameter block together with its gradient buffer.
    void for_each_parameter(const std::function<void(std::span<double>, std::span<double>)>& visit);
    void for_each_parameter(const std::function<void(std::span<const double>, std::span<const double>)>& visit) const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    friend bool operator==(const Mlp& a, const Mlp& b);

private:
    void check_compatible() const;

    std::vector<Layer> layers_;
    bool has_train_cache_ = false;
};

struct SgdOptimizer {
    double learning_rate = 0.005;
};

// params <- params -/+ lr * grad, then clears the gradient buffers.
void sgd_step(Mlp& net, const SgdOptimizer& optimizer, Direction direction);

struct MlpSpec {
    std::size_t input_width = 1;
    std::vector<std::size_t> hidden;
    bool batch_norm = true;
    Activation head = Activation::sigmoid;
};

// Glorot-uniform weights, zero biases.
Mlp make_mlp(const MlpSpec& spec, Rng& rng);

struct LossResult {
    double value = 0.0;
    Vector grad; // d value / d prediction
};

// Mean binary cross-entropy over clamped probabilities.
LossResult bce_loss(std::span<const double> probabilities, std::span<const double> labels);

// Mean absolute error, subgradient sign(pred - target) / n with 0 at ties.
LossResult mae_loss(std::span<const double> predictions, std::span<const double> targets);

// Checkpoints: text format, "FAIRPEN-CKPT-v1" magic, hexadecimal floats so a
// save/load cycle is bit-exact.
inline constexpr const char* kCheckpointMagic = "FAIRPEN-CKPT-v1";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const Mlp& net, std::ostream& out);
Mlp load_checkpoint(std::istream& in, const std::string& source_name = "<stream>");
void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

} // namespace fairpen

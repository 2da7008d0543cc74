#include "fairpen/nn.hpp"

#include <algorithm>
#include <cmath>

namespace fairpen {

double clamp_probability(double p)
{
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::relu:
        return "relu";
    case Activation::sigmoid:
        return "sigmoid";
    case Activation::identity:
        return "identity";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name)
{
    if (name == "relu") {
        return Activation::relu;
    }
    if (name == "sigmoid") {
        return Activation::sigmoid;
    }
    if (name == "identity") {
        return Activation::identity;
    }
    throw std::invalid_argument("unknown activation '" + name + "'");
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out)
    : weights(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)))
    , bias(Vector::Zero(static_cast<Eigen::Index>(out)))
    , grad_weights(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)))
    , grad_bias(Vector::Zero(static_cast<Eigen::Index>(out)))
{
}

BatchNormLayer::BatchNormLayer(std::size_t width)
{
    const auto w = static_cast<Eigen::Index>(width);
    gamma = Vector::Ones(w);
    beta_shift = Vector::Zero(w);
    running_mean = Vector::Zero(w);
    running_var = Vector::Ones(w);
    grad_gamma = Vector::Zero(w);
    grad_beta_shift = Vector::Zero(w);
}

namespace {

struct WidthVisitor {
    // {input width, output width}; 0 means "passes through".
    std::pair<std::size_t, std::size_t> operator()(const DenseLayer& l) const { return {l.input_width(), l.output_width()}; }
    std::pair<std::size_t, std::size_t> operator()(const BatchNormLayer& l) const { return {l.width(), l.width()}; }
    std::pair<std::size_t, std::size_t> operator()(const ActivationLayer&) const { return {0, 0}; }
};

Matrix dense_forward(DenseLayer& layer, const Matrix& x, Mode mode)
{
    if (static_cast<std::size_t>(x.cols()) != layer.input_width()) {
        throw DimensionError("dense layer expects " + std::to_string(layer.input_width()) + " inputs, got " + std::to_string(x.cols()));
    }
    Matrix out = x * layer.weights.transpose();
    out.rowwise() += layer.bias.transpose();
    if (mode == Mode::train) {
        layer.cached_input = x;
    }
    return out;
}

Matrix dense_backward(DenseLayer& layer, const Matrix& dy)
{
    layer.grad_weights.noalias() += dy.transpose() * layer.cached_input;
    layer.grad_bias += dy.colwise().sum().transpose();
    return dy * layer.weights;
}

Matrix batchnorm_forward(BatchNormLayer& layer, const Matrix& x, Mode mode)
{
    if (static_cast<std::size_t>(x.cols()) != layer.width()) {
        throw DimensionError("batch-norm layer expects " + std::to_string(layer.width()) + " inputs, got " + std::to_string(x.cols()));
    }
    layer.mode = mode;
    const Eigen::Index n = x.rows();
    if (mode == Mode::inference || n == 0) {
        const Vector inv_std = (layer.running_var.array() + layer.epsilon).rsqrt().matrix();
        Matrix out = x;
        out.rowwise() -= layer.running_mean.transpose();
        out.array().rowwise() *= (inv_std.array() * layer.gamma.array()).transpose();
        out.rowwise() += layer.beta_shift.transpose();
        return out;
    }
    const Vector mean = x.colwise().mean().transpose();
    Matrix centered = x;
    centered.rowwise() -= mean.transpose();
    const Vector var = (centered.array().square().colwise().sum() / static_cast<double>(n)).matrix().transpose();
    layer.inv_std = (var.array() + layer.epsilon).rsqrt().matrix();
    layer.normalized = centered;
    layer.normalized.array().rowwise() *= layer.inv_std.array().transpose();
    layer.running_mean = layer.momentum * layer.running_mean + (1.0 - layer.momentum) * mean;
    layer.running_var = layer.momentum * layer.running_var + (1.0 - layer.momentum) * var;
    Matrix out = layer.normalized;
    out.array().rowwise() *= layer.gamma.array().transpose();
    out.rowwise() += layer.beta_shift.transpose();
    return out;
}

Matrix batchnorm_backward(BatchNormLayer& layer, const Matrix& dy)
{
    const double n = static_cast<double>(dy.rows());
    layer.grad_gamma += (dy.array() * layer.normalized.array()).colwise().sum().matrix().transpose();
    layer.grad_beta_shift += dy.colwise().sum().transpose();

    Matrix dxhat = dy;
    dxhat.array().rowwise() *= layer.gamma.array().transpose();
    const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
    const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * layer.normalized.array()).colwise().sum().matrix();

    Matrix dx = n * dxhat;
    dx.rowwise() -= sum_dxhat;
    dx.array() -= layer.normalized.array().rowwise() * sum_dxhat_xhat.array();
    dx.array().rowwise() *= (layer.inv_std.array() / n).transpose();
    return dx;
}

Matrix activation_forward(ActivationLayer& layer, const Matrix& x, Mode mode)
{
    Matrix out;
    switch (layer.kind) {
    case Activation::relu:
        out = x.cwiseMax(0.0);
        break;
    case Activation::sigmoid:
        out = x.unaryExpr([](double z) { return sigmoid(z); });
        break;
    case Activation::identity:
        out = x;
        break;
    }
    if (mode == Mode::train) {
        layer.cached_input = x;
        layer.cached_output = out;
    }
    return out;
}

Matrix activation_backward(ActivationLayer& layer, const Matrix& dy)
{
    switch (layer.kind) {
    case Activation::relu:
        return (layer.cached_input.array() > 0.0).select(dy, Matrix::Zero(dy.rows(), dy.cols()));
    case Activation::sigmoid:
        return (dy.array() * layer.cached_output.array() * (1.0 - layer.cached_output.array())).matrix();
    case Activation::identity:
        return dy;
    }
    return dy;
}

} // namespace

Mlp::Mlp(std::vector<Layer> layers)
    : layers_(std::move(layers))
{
    check_compatible();
}

void Mlp::check_compatible() const
{
    std::size_t width = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto [in, out] = std::visit(WidthVisitor {}, layers_[i]);
        if (in == 0) {
            continue;
        }
        if (width != 0 && in != width) {
            throw DimensionError("layer " + std::to_string(i) + " expects width " + std::to_string(in) + " but receives " + std::to_string(width));
        }
        width = out;
    }
}

std::size_t Mlp::input_width() const
{
    for (const auto& layer : layers_) {
        const auto [in, out] = std::visit(WidthVisitor {}, layer);
        if (in != 0) {
            return in;
        }
    }
    return 0;
}

std::size_t Mlp::output_width() const
{
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        const auto [in, out] = std::visit(WidthVisitor {}, *it);
        if (out != 0) {
            return out;
        }
    }
    return 0;
}

std::size_t Mlp::parameter_count() const
{
    std::size_t count = 0;
    for_each_parameter([&](std::span<const double> p, std::span<const double>) { count += p.size(); });
    return count;
}

Matrix Mlp::forward(const Matrix& batch, Mode mode)
{
    if (static_cast<std::size_t>(batch.cols()) != input_width()) {
        throw DimensionError("network expects " + std::to_string(input_width()) + " input columns, got " + std::to_string(batch.cols()));
    }
    Matrix x = batch;
    for (auto& layer : layers_) {
        x = std::visit(
            [&](auto& l) -> Matrix {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    return dense_forward(l, x, mode);
                } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                    return batchnorm_forward(l, x, mode);
                } else {
                    return activation_forward(l, x, mode);
                }
            },
            layer);
    }
    has_train_cache_ = (mode == Mode::train);
    return x;
}

Matrix Mlp::predict(const Matrix& batch) const
{
    if (static_cast<std::size_t>(batch.cols()) != input_width()) {
        throw DimensionError("network expects " + std::to_string(input_width()) + " input columns, got " + std::to_string(batch.cols()));
    }
    Matrix x = batch;
    for (const auto& layer : layers_) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    Matrix out = x * l.weights.transpose();
                    out.rowwise() += l.bias.transpose();
                    x = std::move(out);
                } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                    const Vector inv_std = (l.running_var.array() + l.epsilon).rsqrt().matrix();
                    x.rowwise() -= l.running_mean.transpose();
                    x.array().rowwise() *= (inv_std.array() * l.gamma.array()).transpose();
                    x.rowwise() += l.beta_shift.transpose();
                } else if (l.kind == Activation::relu) {
                    x = x.cwiseMax(0.0);
                } else if (l.kind == Activation::sigmoid) {
                    x = x.unaryExpr([](double z) { return sigmoid(z); });
                }
            },
            layer);
    }
    return x;
}

Matrix Mlp::backward(const Matrix& upstream_grad)
{
    if (!has_train_cache_) {
        throw StateError("backward called without a preceding train-mode forward");
    }
    Matrix grad = upstream_grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        grad = std::visit(
            [&](auto& l) -> Matrix {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    if (grad.cols() != l.weights.rows() || grad.rows() != l.cached_input.rows()) {
                        throw DimensionError("upstream gradient shape does not match the cached forward pass");
                    }
                    return dense_backward(l, grad);
                } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                    return batchnorm_backward(l, grad);
                } else {
                    return activation_backward(l, grad);
                }
            },
            *it);
    }
    has_train_cache_ = false;
    return grad;
}

void Mlp::zero_grad()
{
    for_each_parameter([](std::span<double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); });
}

namespace {

template <typename Span, typename LayerT, typename Visit>
void visit_layer_params(LayerT& layer, Visit&& visit)
{
    auto as_span = [](auto& m) { return Span(m.data(), static_cast<std::size_t>(m.size())); };
    std::visit(
        [&](auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                visit(as_span(l.weights), as_span(l.grad_weights));
                visit(as_span(l.bias), as_span(l.grad_bias));
            } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                visit(as_span(l.gamma), as_span(l.grad_gamma));
                visit(as_span(l.beta_shift), as_span(l.grad_beta_shift));
            }
        },
        layer);
}

} // namespace

void Mlp::for_each_parameter(const std::function<void(std::span<double>, std::span<double>)>& visit)
{
    for (auto& layer : layers_) {
        visit_layer_params<std::span<double>>(layer, visit);
    }
}

void Mlp::for_each_parameter(const std::function<void(std::span<const double>, std::span<const double>)>& visit) const
{
    for (const auto& layer : layers_) {
        visit_layer_params<std::span<const double>>(layer, visit);
    }
}

bool operator==(const Mlp& a, const Mlp& b)
{
    if (a.layers_.size() != b.layers_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        if (a.layers_[i].index() != b.layers_[i].index()) {
            return false;
        }
        const bool same = std::visit(
            [&](const auto& la) {
                using T = std::decay_t<decltype(la)>;
                const auto& lb = std::get<T>(b.layers_[i]);
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    return la.weights == lb.weights && la.bias == lb.bias;
                } else if constexpr (std::is_same_v<T, BatchNormLayer>) {
                    return la.gamma == lb.gamma && la.beta_shift == lb.beta_shift && la.running_mean == lb.running_mean
                        && la.running_var == lb.running_var && la.momentum == lb.momentum && la.epsilon == lb.epsilon;
                } else {
                    return la.kind == lb.kind;
                }
            },
            a.layers_[i]);
        if (!same) {
            return false;
        }
    }
    return true;
}

void sgd_step(Mlp& net, const SgdOptimizer& optimizer, Direction direction)
{
    const double rate = direction == Direction::minimize ? -optimizer.learning_rate : optimizer.learning_rate;
    net.for_each_parameter([rate](std::span<double> p, std::span<double> g) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] += rate * g[i];
            g[i] = 0.0;
        }
    });
}

Mlp make_mlp(const MlpSpec& spec, Rng& rng)
{
    std::vector<Layer> layers;
    std::size_t width = spec.input_width;
    auto dense = [&](std::size_t out) {
        DenseLayer layer(width, out);
        const double limit = std::sqrt(6.0 / static_cast<double>(width + out));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = rng.uniform(-limit, limit);
        }
        layers.emplace_back(std::move(layer));
        width = out;
    };
    for (std::size_t h : spec.hidden) {
        dense(h);
        if (spec.batch_norm) {
            layers.emplace_back(BatchNormLayer(h));
        }
        layers.emplace_back(ActivationLayer {Activation::relu, {}, {}});
    }
    dense(1);
    layers.emplace_back(ActivationLayer {spec.head, {}, {}});
    return Mlp(std::move(layers));
}

LossResult bce_loss(std::span<const double> probabilities, std::span<const double> labels)
{
    if (probabilities.size() != labels.size()) {
        throw DimensionError("bce_loss: " + std::to_string(probabilities.size()) + " probabilities vs " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = probabilities.size();
    LossResult result;
    result.grad = Vector::Zero(static_cast<Eigen::Index>(n));
    if (n == 0) {
        return result;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = clamp_probability(probabilities[i]);
        const double y = labels[i];
        total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        result.grad[static_cast<Eigen::Index>(i)] = inv_n * (-y / p + (1.0 - y) / (1.0 - p));
    }
    result.value = total * inv_n;
    return result;
}

LossResult mae_loss(std::span<const double> predictions, std::span<const double> targets)
{
    if (predictions.size() != targets.size()) {
        throw DimensionError("mae_loss: " + std::to_string(predictions.size()) + " predictions vs " + std::to_string(targets.size()) + " targets");
    }
    const std::size_t n = predictions.size();
    LossResult result;
    result.grad = Vector::Zero(static_cast<Eigen::Index>(n));
    if (n == 0) {
        return result;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = predictions[i] - targets[i];
        total += std::abs(d);
        result.grad[static_cast<Eigen::Index>(i)] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
    result.value = total * inv_n;
    return result;
}

} // namespace fairpen

#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

std::string to_string(ModelKind kind)
{
    return kind == ModelKind::linear ? "linear" : "one_hidden";
}

ModelKind model_kind_from_string(const std::string& name)
{
    if (name == "linear") {
        return ModelKind::linear;
    }
    if (name == "one_hidden") {
        return ModelKind::one_hidden;
    }
    throw ConfigError("unknown model kind '" + name + "' (expected linear or one_hidden)");
}

std::size_t ModelSpec::num_params() const
{
    if (kind == ModelKind::linear) {
        return num_classes * (feature_dim + 1);
    }
    return hidden_dim * (feature_dim + 1) + num_classes * (hidden_dim + 1);
}

void ModelSpec::validate() const
{
    if (feature_dim < 1 || num_classes < 1) {
        throw ConfigError("model feature_dim and num_classes must be positive");
    }
    if (kind == ModelKind::one_hidden && hidden_dim < 1) {
        throw ConfigError("one_hidden model needs hidden_dim >= 1");
    }
}

ParamBlock init_params(const ModelSpec& spec, const InitScheme& init)
{
    spec.validate();
    ParamBlock params(spec.num_params(), 0.0);
    if (init.kind == InitScheme::Kind::gaussian) {
        auto stream = RandomStream::derive(init.seed, StreamTag::init);
        for (double& p : params) {
            p = init.stddev * stream.normal();
        }
    }
    return params;
}

std::uint64_t forward_flops(const ModelSpec& spec, std::size_t batch)
{
    const std::uint64_t m = batch;
    const std::uint64_t d = spec.feature_dim;
    const std::uint64_t c = spec.num_classes;
    const std::uint64_t h = spec.hidden_dim;
    if (spec.kind == ModelKind::linear) {
        return m * (2 * (d + 1) * c + 5 * c);
    }
    return m * (2 * (d + 1) * h + 2 * (h + 1) * c + 5 * c);
}

std::uint64_t gradient_flops(const ModelSpec& spec, std::size_t batch)
{
    const std::uint64_t m = batch;
    const std::uint64_t d = spec.feature_dim;
    const std::uint64_t c = spec.num_classes;
    const std::uint64_t h = spec.hidden_dim;
    const std::uint64_t matmul = spec.kind == ModelKind::linear ? 2 * (d + 1) * c * m
                                                                : (2 * (d + 1) * h + 2 * (h + 1) * c) * m;
    return forward_flops(spec, batch) + 2 * matmul;
}

std::uint64_t update_flops(const ModelSpec& spec)
{
    return 2 * static_cast<std::uint64_t>(spec.num_params());
}

namespace {

void check_inputs(const ModelSpec& spec, std::span<const double> params, const BatchView& batch)
{
    spec.validate();
    if (params.size() != spec.num_params()) {
        throw ShapeError("parameter block has " + std::to_string(params.size()) + " entries, model expects " +
                         std::to_string(spec.num_params()));
    }
    if (batch.dim != spec.feature_dim || batch.features.size() != batch.size() * batch.dim) {
        throw ShapeError("batch feature dimension " + std::to_string(batch.dim) + " does not match model " +
                         std::to_string(spec.feature_dim));
    }
    if (batch.size() == 0) {
        throw ArgumentError("empty batch");
    }
    for (std::int32_t y : batch.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
            throw ShapeError("label " + std::to_string(y) + " outside the model's " +
                             std::to_string(spec.num_classes) + " classes");
        }
    }
}

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// out[r] = W[r, :n] . x + W[r, n] for each of `rows` rows of width n + 1.
void affine(std::span<const double> weights, std::size_t rows, std::span<const double> x, std::span<double> out)
{
    const std::size_t n = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = weights.subspan(r * (n + 1), n + 1);
        out[r] = kernels::dot(row.first(n), x) + row[n];
    }
}

// Scores for one sample. `hidden` receives sigmoid activations (one_hidden only).
void sample_logits(const ModelSpec& spec, std::span<const double> params, std::span<const double> x,
                   std::span<double> hidden, std::span<double> logits)
{
    if (spec.kind == ModelKind::linear) {
        affine(params, spec.num_classes, x, logits);
        return;
    }
    const std::size_t first = spec.hidden_dim * (spec.feature_dim + 1);
    affine(params.first(first), spec.hidden_dim, x, hidden);
    for (double& a : hidden) {
        a = sigmoid(a);
    }
    affine(params.subspan(first), spec.num_classes, hidden, logits);
}

std::int32_t argmax(std::span<const double> values)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return static_cast<std::int32_t>(best);
}

// Softmax in place (max-shifted); returns -log p[label].
double softmax_xent(std::span<double> logits, std::int32_t label)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    const double shifted_label = logits[static_cast<std::size_t>(label)] - top;
    double total = 0.0;
    for (double& z : logits) {
        z = std::exp(z - top);
        total += z;
    }
    const double loss = std::log(total) - shifted_label;
    for (double& z : logits) {
        z /= total;
    }
    return loss;
}

}  // namespace

ForwardResult forward_loss(const ModelSpec& spec, std::span<const double> params, const BatchView& batch)
{
    check_inputs(spec, params, batch);
    ForwardResult result;
    result.predictions.resize(batch.size());
    std::vector<double> hidden(spec.hidden_dim);
    std::vector<double> logits(spec.num_classes);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        sample_logits(spec, params, batch.row(i), hidden, logits);
        result.predictions[i] = argmax(logits);
        total += softmax_xent(logits, batch.labels[i]);
    }
    result.mean_loss = total / static_cast<double>(batch.size());
    if (!std::isfinite(result.mean_loss)) {
        throw NumericError("non-finite loss");
    }
    result.flops = forward_flops(spec, batch.size());
    return result;
}

GradResult gradient(const ModelSpec& spec, std::span<const double> params, const BatchView& batch)
{
    check_inputs(spec, params, batch);
    const std::size_t d = spec.feature_dim;
    const std::size_t c = spec.num_classes;
    const std::size_t h = spec.hidden_dim;
    const double inv_m = 1.0 / static_cast<double>(batch.size());

    GradResult result;
    result.grad.assign(spec.num_params(), 0.0);
    std::span<double> grad(result.grad);
    std::vector<double> hidden(h);
    std::vector<double> logits(c);
    std::vector<double> hidden_delta(h);
    double total = 0.0;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto x = batch.row(i);
        const std::int32_t y = batch.labels[i];
        sample_logits(spec, params, x, hidden, logits);
        total += softmax_xent(logits, y);
        // logits now hold softmax probabilities; turn them into dL/dz.
        logits[static_cast<std::size_t>(y)] -= 1.0;
        for (double& g : logits) {
            g *= inv_m;
        }

        if (spec.kind == ModelKind::linear) {
            for (std::size_t k = 0; k < c; ++k) {
                auto row = grad.subspan(k * (d + 1), d + 1);
                kernels::axpy(logits[k], x, row.first(d));
                row[d] += logits[k];
            }
            continue;
        }

        const std::size_t first = h * (d + 1);
        const auto out_weights = params.subspan(first);
        auto out_grad = grad.subspan(first);
        std::fill(hidden_delta.begin(), hidden_delta.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            auto row = out_grad.subspan(k * (h + 1), h + 1);
            kernels::axpy(logits[k], hidden, row.first(h));
            row[h] += logits[k];
            kernels::axpy(logits[k], out_weights.subspan(k * (h + 1), h), hidden_delta);
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double delta = hidden_delta[j] * hidden[j] * (1.0 - hidden[j]);
            auto row = grad.subspan(j * (d + 1), d + 1);
            kernels::axpy(delta, x, row.first(d));
            row[d] += delta;
        }
    }

    result.mean_loss = total * inv_m;
    if (!std::isfinite(result.mean_loss) ||
        !std::all_of(result.grad.begin(), result.grad.end(), [](double g) { return std::isfinite(g); })) {
        throw NumericError("non-finite loss or gradient");
    }
    result.flops = gradient_flops(spec, batch.size());
    return result;
}

void sgd_step(std::span<double> params, std::span<const double> grad, double lr)
{
    if (params.size() != grad.size()) {
        throw ShapeError("sgd_step: parameter block has " + std::to_string(params.size()) +
                         " entries, gradient has " + std::to_string(grad.size()));
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw ArgumentError("learning rate must be finite and nonnegative");
    }
    kernels::axpy(-lr, grad, params);
}

std::vector<std::int32_t> predict(const ModelSpec& spec, std::span<const double> params, const BatchView& batch)
{
    check_inputs(spec, params, batch);
    std::vector<std::int32_t> out(batch.size());
    std::vector<double> hidden(spec.hidden_dim);
    std::vector<double> logits(spec.num_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        sample_logits(spec, params, batch.row(i), hidden, logits);
        out[i] = argmax(logits);
    }
    return out;
}

double accuracy_top1(const ModelSpec& spec, std::span<const double> params, const BatchView& batch)
{
    if (batch.size() == 0) {
        throw ArgumentError("accuracy of an empty sample set is undefined");
    }
    const auto predictions = predict(spec, params, batch);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        correct += predictions[i] == batch.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace fedsim

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

enum class ModelKind { linear, one_hidden };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Classifier shape.
///
/// Parameter layout (row-major, bias stored as the last column of each row):
///   linear:     W  [c x (d+1)]
///   one_hidden: W1 [h x (d+1)] followed by W2 [c x (h+1)], sigmoid hidden units
struct ModelSpec {
    ModelKind kind = ModelKind::linear;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::size_t hidden_dim = 0;

    std::size_t num_params() const;
    void validate() const;
};

using ParamBlock = std::vector<double>;

struct InitScheme {
    enum class Kind { zeros, gaussian } kind = Kind::zeros;
    double stddev = 0.0;
    std::uint64_t seed = 0;

    static InitScheme zeros() { return {}; }
    static InitScheme gaussian(double stddev, std::uint64_t seed) { return {Kind::gaussian, stddev, seed}; }
};

ParamBlock init_params(const ModelSpec& spec, const InitScheme& init);

struct ForwardResult {
    double mean_loss = 0.0;
    std::vector<std::int32_t> predictions;
    std::uint64_t flops = 0;
};

struct GradResult {
    ParamBlock grad;
    double mean_loss = 0.0;
    std::uint64_t flops = 0;
};

// FLOP counting model. A dense layer with input width a (bias included),
// output width b and batch m costs 2*a*b*m forward; softmax plus
// cross-entropy costs 5*c*m; the backward pass costs twice the forward
// matmul cost; an SGD update costs 2*P. Activations are not counted.
std::uint64_t forward_flops(const ModelSpec& spec, std::size_t batch);
std::uint64_t gradient_flops(const ModelSpec& spec, std::size_t batch);
std::uint64_t update_flops(const ModelSpec& spec);

/// Mean softmax cross-entropy (natural log) and argmax predictions.
ForwardResult forward_loss(const ModelSpec& spec, std::span<const double> params, const BatchView& batch);

/// Analytic gradient of the mean cross-entropy.
GradResult gradient(const ModelSpec& spec, std::span<const double> params, const BatchView& batch);

/// params -= lr * grad
void sgd_step(std::span<double> params, std::span<const double> grad, double lr);

/// Argmax predictions only; ties go to the lowest class index.
std::vector<std::int32_t> predict(const ModelSpec& spec, std::span<const double> params, const BatchView& batch);

double accuracy_top1(const ModelSpec& spec, std::span<const double> params, const BatchView& batch);

}  // namespace fedsim

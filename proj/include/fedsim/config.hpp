#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/dataset.hpp"
#include "fedsim/fedalgo.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/synthgen.hpp"

namespace fedsim {

enum class Algorithm { fedavg, minibatch_sgd, reptile, local, global_iid };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct DatasetSource {
    std::optional<std::string> path;
    std::optional<SynthConfig> synth;
};

struct PreprocessConfig {
    std::size_t min_samples = 0;  // 0 disables the filter
    std::optional<std::size_t> subsample_count;
    std::optional<double> subsample_fraction;
    bool mix_iid = false;
    SplitFractions split;
};

struct ModelConfig {
    ModelKind kind = ModelKind::linear;
    std::size_t hidden_dim = 0;
    InitScheme::Kind init = InitScheme::Kind::zeros;
    double init_std = 0.1;
};

struct LocalConfig {
    std::vector<double> lr_grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    std::size_t epochs = 10;
    std::size_t batch_size = 5;
};

struct GlobalIidConfig {
    std::size_t epochs = 3;
    double lr = 0.1;
    std::size_t batch_size = 5;
};

struct EvalConfig {
    AccuracyWeighting weighting = AccuracyWeighting::per_sample;
    double device_fraction = 1.0;    // share of evaluation devices scored each round
    double holdout_fraction = 0.0;   // share of devices kept out of training, evaluation only
    std::size_t finetune_steps = 0;  // > 0 enables personalized evaluation
    std::size_t finetune_batch = 5;
    double finetune_lr = 0.0;        // 0 uses fed.client_lr
};

/// One experiment. `output` and `workers` are invocation details: they are
/// not echoed into the log header, so the header alone reproduces the run.
struct ExperimentConfig {
    std::string name;
    DatasetSource dataset;
    PreprocessConfig preprocess;
    ModelConfig model;
    Algorithm algorithm = Algorithm::fedavg;
    FedConfig fed;
    LocalConfig local;
    GlobalIidConfig global_iid;
    EvalConfig eval;
    std::uint64_t seed = 0;

    std::string output;
    unsigned workers = 1;
};

/// Parse the JSON config text. Unknown keys and type errors are collected
/// and reported together in one ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig config_from_json(const nlohmann::ordered_json& doc);

/// Normalized echo with every field spelled out (defaults included).
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

/// Every violated constraint, as "section.field: problem". Empty means valid.
/// Constraints that need the data (clients_per_round vs device count) are
/// checked when the experiment runs.
std::vector<std::string> validate_config(const ExperimentConfig& config);

nlohmann::ordered_json synth_config_to_json(const SynthConfig& config);

}  // namespace fedsim

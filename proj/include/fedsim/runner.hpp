#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/dataset.hpp"

namespace fedsim {

/// Dataset after loading/generation and every preprocessing step.
struct PreparedData {
    FederatedDataset train;
    FederatedDataset val;
    FederatedDataset test;
    /// Devices scored during evaluation (all of `test`, or the held-out ones).
    FederatedDataset eval_test;
    /// Training split of every device, held-out ones included; fine-tuning
    /// during personalized evaluation draws from it.
    FederatedDataset finetune_train;
    std::map<std::string, std::string> hierarchy;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Runs the experiment and streams its log to `out`. The bytes written depend
/// only on the config echo (never on config.workers or config.output).
/// Throws ConfigError listing every violation if the config is invalid.
void run_experiment(const ExperimentConfig& config, std::ostream& out);

/// Same, writing to config.output.
void run_experiment(const ExperimentConfig& config);

struct PresetInfo {
    std::string name;
    std::string description;
};

std::vector<PresetInfo> list_presets();
/// Throws ConfigError for unknown names.
ExperimentConfig preset_config(const std::string& name);

}  // namespace fedsim

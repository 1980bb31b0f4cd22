#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"
#include "fedsim/random.hpp"
#include "fedsim/round_log.hpp"

namespace fedsim {

/// How the server weights client contributions.
enum class ClientWeighting {
    samples,  // n_k / sum n (FedAvg convention)
    uniform,  // every device counts equally
};

struct FedConfig {
    std::size_t clients_per_round = 10;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 5;
    double client_lr = 0.1;
    std::size_t rounds = 100;
    std::size_t eval_every = 1;
    std::uint64_t seed = 0;
    ClientWeighting weighting = ClientWeighting::samples;
    std::uint64_t bytes_per_param = 4;

    // minibatch SGD
    double data_fraction = 1.0;
    double server_lr = 0.1;

    // Reptile
    double meta_lr_start = 2.0;
    double meta_lr_end = 0.0;
    std::size_t inner_steps = 5;
    std::size_t inner_batch = 10;

    /// Empty when every field is in range; otherwise one "field: problem" per violation.
    std::vector<std::string> violations() const;
};

/// Engine state between rounds. The training split is borrowed.
struct TrainingState {
    ModelSpec spec;
    ParamBlock params;
    const FederatedDataset* train = nullptr;
    CostCounters totals;
};

struct RoundResult {
    ParamBlock params;
    RoundLog log;  // eval entries are filled in by the caller
};

/// C devices drawn uniformly without replacement from a stream keyed by
/// (seed, round); returned in canonical (sorted id) order.
std::vector<std::string> select_clients(const FederatedDataset& ds, std::size_t clients, std::size_t round,
                                        std::uint64_t seed);

/// Client stream for one round.
RandomStream client_stream(std::uint64_t seed, std::size_t round, const std::string& device_id);

struct LocalUpdate {
    ParamBlock params;
    std::size_t num_samples = 0;
    std::uint64_t flops = 0;
};

/// `epochs` passes of minibatch SGD starting from `start`. Each epoch
/// reshuffles with `rng`; the final partial batch is kept.
LocalUpdate local_update(const ModelSpec& spec, std::span<const double> start, const DeviceData& device,
                         std::size_t epochs, std::size_t batch_size, double lr, RandomStream& rng);

/// `steps` minibatch SGD steps, cycling through reshuffled passes over the
/// device's data. Returns the FLOPs spent.
std::uint64_t run_sgd_steps(const ModelSpec& spec, ParamBlock& params, const DeviceData& device,
                            std::size_t steps, std::size_t batch_size, double lr, RandomStream& rng);

/// sum_k w_k theta_k / sum_k w_k, accumulated in the given order.
ParamBlock weighted_average(std::span<const ParamBlock> models, std::span<const double> weights);

double mean_pairwise_distance(std::span<const ParamBlock> models);

RoundResult fedavg_round(const TrainingState& state, const FedConfig& config, std::size_t round,
                         unsigned workers = 1);
RoundResult minibatch_sgd_round(const TrainingState& state, const FedConfig& config, std::size_t round,
                                unsigned workers = 1);
RoundResult reptile_round(const TrainingState& state, const FedConfig& config, std::size_t round,
                          unsigned workers = 1);

/// Linear meta step-size schedule: start at round 0, end at round R-1.
double reptile_meta_lr(const FedConfig& config, std::size_t round);

struct LocalModel {
    ParamBlock params;
    double lr = 0.0;
    double selection_accuracy = 0.0;  // validation accuracy (train accuracy when no val data)
    std::uint64_t flops = 0;
};

/// Trains one model per device and per learning rate, keeping the rate with
/// the best validation accuracy (ties go to the smaller rate). Rates that
/// diverge to non-finite values are discarded.
std::map<std::string, LocalModel> train_local(const FederatedDataset& train, const FederatedDataset& val,
                                              const ModelSpec& spec, std::span<const double> initial,
                                              std::vector<double> lr_grid, std::size_t epochs,
                                              std::size_t batch_size, std::uint64_t seed, unsigned workers = 1);

struct GlobalIidResult {
    ParamBlock params;
    std::uint64_t flops = 0;
};

/// Pools every device's data (mix_iid) and trains a single model on it.
GlobalIidResult train_global_iid(const FederatedDataset& train, const ModelSpec& spec,
                                 std::span<const double> initial, std::size_t epochs, double lr,
                                 std::size_t batch_size, std::uint64_t seed);

/// Plain top-1 accuracy on each device of `test`.
std::vector<DeviceAccuracy> evaluate_devices(const ModelSpec& spec, std::span<const double> params,
                                             const FederatedDataset& test, unsigned workers = 1);

/// Per-device accuracy after fine-tuning a copy of `params` for
/// `finetune_steps` minibatches on that device's training split.
std::vector<DeviceAccuracy> evaluate_personalized(const ModelSpec& spec, std::span<const double> params,
                                                  const FederatedDataset& train, const FederatedDataset& test,
                                                  std::size_t finetune_steps, std::size_t finetune_batch,
                                                  double lr, std::uint64_t seed, unsigned workers = 1);

}  // namespace fedsim

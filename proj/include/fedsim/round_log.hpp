#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fedsim {

struct DeviceAccuracy {
    std::string device_id;
    double accuracy = 0.0;
    std::size_t sample_count = 0;

    bool operator==(const DeviceAccuracy&) const = default;
};

/// Cumulative systems cost of a run. FLOPs count client-side training work
/// only (server aggregation and evaluation are free in this model).
struct CostCounters {
    std::uint64_t flops = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;

    bool operator==(const CostCounters&) const = default;
};

struct RoundLog {
    std::size_t round = 0;
    std::vector<std::string> participants;
    /// Sample-weighted loss of the post-round global model on the
    /// participants' training data.
    double train_loss = 0.0;
    /// Mean pairwise L2 distance between the participants' returned models
    /// (0 for engines that return gradients, or with a single participant).
    double client_dispersion = 0.0;
    bool evaluated = false;
    std::vector<DeviceAccuracy> eval;
    CostCounters cumulative;

    bool operator==(const RoundLog&) const = default;
};

}  // namespace fedsim

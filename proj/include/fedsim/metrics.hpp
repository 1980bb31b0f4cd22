#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsim/round_log.hpp"

namespace fedsim {

/// Whether every device counts once, or every test sample does (devices
/// weighted by their sample counts).
enum class AccuracyWeighting { per_device, per_sample };

std::string to_string(AccuracyWeighting weighting);
AccuracyWeighting weighting_from_string(const std::string& name);

struct AccuracySummary {
    double mean = 0.0;
    double p10 = 0.0;
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
    double p90 = 0.0;
    AccuracyWeighting weighting = AccuracyWeighting::per_device;
    std::size_t n_devices = 0;
};

struct SystemsBudget {
    double threshold = 0.0;
    bool reached = false;
    std::optional<std::size_t> round_reached;
    std::uint64_t total_flops = 0;
    std::uint64_t total_bytes_up = 0;
    std::uint64_t total_bytes_down = 0;
};

/// Percentile of `values` (sorted ascending) with integer multiplicities
/// `weights`, defined as the linear-interpolation percentile of the expanded
/// multiset: rank r = p/100 * (N - 1) with N = sum of weights, result
/// x[floor r] + (r - floor r) * (x[floor r + 1] - x[floor r]) over the
/// expanded, sorted values. With unit weights this is the usual
/// sort-and-interpolate rule.
double weighted_percentile(std::span<const double> sorted_values, std::span<const std::size_t> weights, double p);

AccuracySummary summarize_accuracy(std::span<const DeviceAccuracy> entries, AccuracyWeighting weighting);

/// One summary per hierarchy group; devices without a group land in "ungrouped".
std::map<std::string, AccuracySummary> stratified_accuracy(std::span<const DeviceAccuracy> entries,
                                                           const std::map<std::string, std::string>& hierarchy,
                                                           AccuracyWeighting weighting);

/// First evaluated round whose weighted mean accuracy reaches `threshold`,
/// with that round's cumulative counters; end-of-run totals when never reached.
SystemsBudget systems_budget(std::span<const RoundLog> logs, double threshold, AccuracyWeighting weighting);

}  // namespace fedsim

#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/error.hpp"

namespace fedsim {

std::string to_string(AccuracyWeighting weighting)
{
    return weighting == AccuracyWeighting::per_device ? "per_device" : "per_sample";
}

AccuracyWeighting weighting_from_string(const std::string& name)
{
    if (name == "per_device") {
        return AccuracyWeighting::per_device;
    }
    if (name == "per_sample") {
        return AccuracyWeighting::per_sample;
    }
    throw ConfigError("unknown accuracy weighting '" + name + "' (expected per_device or per_sample)");
}

double weighted_percentile(std::span<const double> sorted_values, std::span<const std::size_t> weights, double p)
{
    if (sorted_values.empty() || sorted_values.size() != weights.size()) {
        throw ArgumentError("weighted_percentile needs one weight per value");
    }
    std::size_t total = 0;
    for (std::size_t w : weights) {
        total += w;
    }
    if (total == 0) {
        throw ArgumentError("weighted_percentile weights sum to zero");
    }

    const double rank = p / 100.0 * static_cast<double>(total - 1);
    const auto lower = static_cast<std::size_t>(std::floor(rank));
    const double frac = rank - static_cast<double>(lower);

    // Value at a 0-based position of the expanded multiset.
    std::size_t item = 0;
    std::size_t covered = weights[0];
    auto advance_to = [&](std::size_t position) {
        while (covered <= position) {
            ++item;
            covered += weights[item];
        }
        return sorted_values[item];
    };
    const double low_value = advance_to(lower);
    if (frac == 0.0 || lower + 1 >= total) {
        return low_value;
    }
    const double high_value = advance_to(lower + 1);
    return low_value + frac * (high_value - low_value);
}

AccuracySummary summarize_accuracy(std::span<const DeviceAccuracy> entries, AccuracyWeighting weighting)
{
    if (entries.empty()) {
        throw ArgumentError("cannot summarize an empty accuracy list");
    }
    for (const auto& e : entries) {
        if (!(e.accuracy >= 0.0 && e.accuracy <= 1.0)) {
            throw ArgumentError("accuracy of device '" + e.device_id + "' lies outside [0, 1]");
        }
        if (e.sample_count < 1) {
            throw ArgumentError("device '" + e.device_id + "' reports zero samples");
        }
    }

    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return entries[a].accuracy < entries[b].accuracy; });
    std::vector<double> values;
    std::vector<std::size_t> weights;
    values.reserve(entries.size());
    weights.reserve(entries.size());
    for (std::size_t i : order) {
        values.push_back(entries[i].accuracy);
        weights.push_back(weighting == AccuracyWeighting::per_sample ? entries[i].sample_count : 1);
    }

    AccuracySummary s;
    s.weighting = weighting;
    s.n_devices = entries.size();
    double weighted_sum = 0.0;
    double total_weight = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        weighted_sum += static_cast<double>(weights[i]) * values[i];
        total_weight += static_cast<double>(weights[i]);
    }
    s.mean = weighted_sum / total_weight;
    s.p10 = weighted_percentile(values, weights, 10.0);
    s.p25 = weighted_percentile(values, weights, 25.0);
    s.p50 = weighted_percentile(values, weights, 50.0);
    s.p75 = weighted_percentile(values, weights, 75.0);
    s.p90 = weighted_percentile(values, weights, 90.0);
    return s;
}

std::map<std::string, AccuracySummary> stratified_accuracy(std::span<const DeviceAccuracy> entries,
                                                           const std::map<std::string, std::string>& hierarchy,
                                                           AccuracyWeighting weighting)
{
    std::map<std::string, std::vector<DeviceAccuracy>> groups;
    for (const auto& e : entries) {
        auto it = hierarchy.find(e.device_id);
        groups[it == hierarchy.end() ? "ungrouped" : it->second].push_back(e);
    }
    std::map<std::string, AccuracySummary> out;
    for (const auto& [group, members] : groups) {
        out.emplace(group, summarize_accuracy(members, weighting));
    }
    return out;
}

SystemsBudget systems_budget(std::span<const RoundLog> logs, double threshold, AccuracyWeighting weighting)
{
    SystemsBudget budget;
    budget.threshold = threshold;
    bool any_evaluated = false;
    for (const auto& log : logs) {
        if (!log.evaluated || log.eval.empty()) {
            continue;
        }
        any_evaluated = true;
        if (summarize_accuracy(log.eval, weighting).mean >= threshold) {
            budget.reached = true;
            budget.round_reached = log.round;
            budget.total_flops = log.cumulative.flops;
            budget.total_bytes_up = log.cumulative.bytes_up;
            budget.total_bytes_down = log.cumulative.bytes_down;
            return budget;
        }
    }
    if (!any_evaluated) {
        throw ArgumentError("systems_budget needs at least one evaluated round");
    }
    const auto& last = logs.back();
    budget.total_flops = last.cumulative.flops;
    budget.total_bytes_up = last.cumulative.bytes_up;
    budget.total_bytes_down = last.cumulative.bytes_down;
    return budget;
}

}  // namespace fedsim

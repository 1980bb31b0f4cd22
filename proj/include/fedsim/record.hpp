#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/metrics.hpp"
#include "fedsim/round_log.hpp"

namespace fedsim {

// Experiment log: UTF-8, one JSON object per line.
//
//   {"type":"header","format":"fedsim-log/1","config":{...}}
//   {"type":"round","round":0,"participants":[...],"train_loss":..,"client_dispersion":..,
//    "cumulative_flops":..,"cumulative_bytes_up":..,"cumulative_bytes_down":..,
//    "eval":[{"device":"f_00000","n":12,"accuracy":0.75},...]}     ("eval" only when evaluated)
//   {"type":"final","algorithm":"fedavg","cumulative_flops":..,"cumulative_bytes_up":..,
//    "cumulative_bytes_down":..,"weighting":"per_sample",
//    "devices":[{"device":..,"n":..,"accuracy":..[,"lr":..]},...],
//    "summary":{"weighting":..,"n_devices":..,"mean":..,"p10":..,"p25":..,"p50":..,"p75":..,"p90":..},
//    "hierarchy":{device: group,...}}                                ("summary" absent with no devices)
inline constexpr const char* kLogFormat = "fedsim-log/1";

struct FinalRecord {
    std::string algorithm;
    CostCounters cumulative;
    AccuracyWeighting weighting = AccuracyWeighting::per_sample;
    std::vector<DeviceAccuracy> devices;
    std::map<std::string, double> chosen_lr;  // local pipeline only
    std::optional<AccuracySummary> summary;
    std::map<std::string, std::string> hierarchy;
};

struct ExperimentRecord {
    nlohmann::ordered_json config;
    std::vector<RoundLog> rounds;
    std::optional<FinalRecord> final;
};

/// Streams records to an output, one line each, flushing per line.
class RecordWriter {
public:
    explicit RecordWriter(std::ostream& out) : out_(out) {}

    void header(const nlohmann::ordered_json& config);
    void round(const RoundLog& log);
    void final(const FinalRecord& record);

private:
    void emit(const nlohmann::ordered_json& line);
    std::ostream& out_;
};

nlohmann::ordered_json summary_to_json(const AccuracySummary& s);

/// Parse a log; FormatError messages carry the 1-based line number.
ExperimentRecord parse_record(const std::string& text);
ExperimentRecord read_record(const std::filesystem::path& path);

enum class CsvKind { rounds, devices, summary };
CsvKind csv_kind_from_string(const std::string& name);

/// rounds:  round,train_loss,eval_acc,cumulative_flops,cumulative_bytes_up,cumulative_bytes_down
///          (eval_acc is the mean accuracy under the run's eval weighting; blank when not evaluated)
/// devices: device_id,n_test,accuracy
/// summary: weighting,n_devices,mean,p10,p25,p50,p75,p90
std::string export_csv(const ExperimentRecord& record, CsvKind kind);

/// Shortest round-trip decimal form of a double.
std::string format_number(double value);

}  // namespace fedsim

#include "fedsim/record.hpp"

#include <fstream>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "fedsim/error.hpp"

namespace fedsim {

using ordered_json = nlohmann::ordered_json;

std::string format_number(double value)
{
    return fmt::format("{}", value);
}

void RecordWriter::emit(const ordered_json& line)
{
    out_ << line.dump() << '\n';
    out_.flush();
}

void RecordWriter::header(const ordered_json& config)
{
    ordered_json line;
    line["type"] = "header";
    line["format"] = kLogFormat;
    line["config"] = config;
    emit(line);
}

namespace {

ordered_json devices_to_json(const std::vector<DeviceAccuracy>& devices, const std::map<std::string, double>* lrs)
{
    ordered_json out = ordered_json::array();
    for (const auto& d : devices) {
        ordered_json entry{{"device", d.device_id}, {"n", d.sample_count}, {"accuracy", d.accuracy}};
        if (lrs != nullptr) {
            if (auto it = lrs->find(d.device_id); it != lrs->end()) {
                entry["lr"] = it->second;
            }
        }
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace

ordered_json summary_to_json(const AccuracySummary& s)
{
    return ordered_json{{"weighting", to_string(s.weighting)},
                        {"n_devices", s.n_devices},
                        {"mean", s.mean},
                        {"p10", s.p10},
                        {"p25", s.p25},
                        {"p50", s.p50},
                        {"p75", s.p75},
                        {"p90", s.p90}};
}

void RecordWriter::round(const RoundLog& log)
{
    ordered_json line;
    line["type"] = "round";
    line["round"] = log.round;
    line["participants"] = log.participants;
    line["train_loss"] = log.train_loss;
    line["client_dispersion"] = log.client_dispersion;
    line["cumulative_flops"] = log.cumulative.flops;
    line["cumulative_bytes_up"] = log.cumulative.bytes_up;
    line["cumulative_bytes_down"] = log.cumulative.bytes_down;
    if (log.evaluated) {
        line["eval"] = devices_to_json(log.eval, nullptr);
    }
    emit(line);
}

void RecordWriter::final(const FinalRecord& record)
{
    ordered_json line;
    line["type"] = "final";
    line["algorithm"] = record.algorithm;
    line["cumulative_flops"] = record.cumulative.flops;
    line["cumulative_bytes_up"] = record.cumulative.bytes_up;
    line["cumulative_bytes_down"] = record.cumulative.bytes_down;
    line["weighting"] = to_string(record.weighting);
    line["devices"] = devices_to_json(record.devices, record.chosen_lr.empty() ? nullptr : &record.chosen_lr);
    if (record.summary) {
        line["summary"] = summary_to_json(*record.summary);
    }
    if (!record.hierarchy.empty()) {
        ordered_json groups = ordered_json::object();
        for (const auto& [id, group] : record.hierarchy) {
            groups[id] = group;
        }
        line["hierarchy"] = std::move(groups);
    }
    emit(line);
}

// ---------------------------------------------------------------------------
// Reading

namespace {

struct LineError {
    std::size_t line;
    std::string message;
};

template <typename T>
T field(const ordered_json& obj, const char* key, std::size_t line)
{
    if (!obj.contains(key)) {
        throw LineError{line, std::string("missing '") + key + "'"};
    }
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw LineError{line, std::string("bad value for '") + key + "'"};
    }
}

std::vector<DeviceAccuracy> devices_from_json(const ordered_json& arr, std::size_t line,
                                              std::map<std::string, double>* lrs)
{
    if (!arr.is_array()) {
        throw LineError{line, "device list must be an array"};
    }
    std::vector<DeviceAccuracy> out;
    for (const auto& e : arr) {
        if (!e.is_object()) {
            throw LineError{line, "device entry must be an object"};
        }
        DeviceAccuracy d;
        d.device_id = field<std::string>(e, "device", line);
        d.sample_count = field<std::size_t>(e, "n", line);
        d.accuracy = field<double>(e, "accuracy", line);
        if (lrs != nullptr && e.contains("lr")) {
            (*lrs)[d.device_id] = field<double>(e, "lr", line);
        }
        out.push_back(std::move(d));
    }
    return out;
}

AccuracySummary summary_from_json(const ordered_json& obj, std::size_t line)
{
    AccuracySummary s;
    try {
        s.weighting = weighting_from_string(field<std::string>(obj, "weighting", line));
    } catch (const ConfigError& e) {
        throw LineError{line, e.what()};
    }
    s.n_devices = field<std::size_t>(obj, "n_devices", line);
    s.mean = field<double>(obj, "mean", line);
    s.p10 = field<double>(obj, "p10", line);
    s.p25 = field<double>(obj, "p25", line);
    s.p50 = field<double>(obj, "p50", line);
    s.p75 = field<double>(obj, "p75", line);
    s.p90 = field<double>(obj, "p90", line);
    return s;
}

}  // namespace

ExperimentRecord parse_record(const std::string& text)
{
    ExperimentRecord record;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    bool have_header = false;
    try {
        while (std::getline(in, raw)) {
            ++line;
            if (raw.empty()) {
                continue;
            }
            ordered_json obj;
            try {
                obj = ordered_json::parse(raw);
            } catch (const nlohmann::json::parse_error&) {
                throw LineError{line, "not valid JSON"};
            }
            if (!obj.is_object()) {
                throw LineError{line, "record must be a JSON object"};
            }
            const auto type = field<std::string>(obj, "type", line);
            if (record.final) {
                throw LineError{line, "record after the final line"};
            }
            if (type == "header") {
                if (have_header) {
                    throw LineError{line, "duplicate header"};
                }
                if (field<std::string>(obj, "format", line) != kLogFormat) {
                    throw LineError{line, "unsupported log format"};
                }
                record.config = obj.contains("config") ? obj["config"] : ordered_json::object();
                have_header = true;
                continue;
            }
            if (!have_header) {
                throw LineError{line, "first record must be the header"};
            }
            if (type == "round") {
                RoundLog log;
                log.round = field<std::size_t>(obj, "round", line);
                if (!record.rounds.empty() && log.round <= record.rounds.back().round) {
                    throw LineError{line, "round indices must be strictly increasing"};
                }
                log.participants = field<std::vector<std::string>>(obj, "participants", line);
                log.train_loss = field<double>(obj, "train_loss", line);
                log.client_dispersion = field<double>(obj, "client_dispersion", line);
                log.cumulative.flops = field<std::uint64_t>(obj, "cumulative_flops", line);
                log.cumulative.bytes_up = field<std::uint64_t>(obj, "cumulative_bytes_up", line);
                log.cumulative.bytes_down = field<std::uint64_t>(obj, "cumulative_bytes_down", line);
                if (obj.contains("eval")) {
                    log.evaluated = true;
                    log.eval = devices_from_json(obj["eval"], line, nullptr);
                }
                record.rounds.push_back(std::move(log));
            } else if (type == "final") {
                FinalRecord fin;
                fin.algorithm = field<std::string>(obj, "algorithm", line);
                fin.cumulative.flops = field<std::uint64_t>(obj, "cumulative_flops", line);
                fin.cumulative.bytes_up = field<std::uint64_t>(obj, "cumulative_bytes_up", line);
                fin.cumulative.bytes_down = field<std::uint64_t>(obj, "cumulative_bytes_down", line);
                try {
                    fin.weighting = weighting_from_string(field<std::string>(obj, "weighting", line));
                } catch (const ConfigError& e) {
                    throw LineError{line, e.what()};
                }
                fin.devices = devices_from_json(obj.contains("devices") ? obj["devices"] : ordered_json::array(),
                                                line, &fin.chosen_lr);
                if (obj.contains("summary")) {
                    fin.summary = summary_from_json(obj["summary"], line);
                }
                if (obj.contains("hierarchy")) {
                    fin.hierarchy = field<std::map<std::string, std::string>>(obj, "hierarchy", line);
                }
                record.final = std::move(fin);
            } else {
                throw LineError{line, "unknown record type '" + type + "'"};
            }
        }
    } catch (const LineError& e) {
        throw FormatError("log line " + std::to_string(e.line) + ": " + e.message);
    }
    if (!have_header) {
        throw FormatError("log has no header line");
    }
    return record;
}

ExperimentRecord read_record(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open log '" + path.string() + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_record(buffer.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

CsvKind csv_kind_from_string(const std::string& name)
{
    if (name == "rounds") {
        return CsvKind::rounds;
    }
    if (name == "devices") {
        return CsvKind::devices;
    }
    if (name == "summary") {
        return CsvKind::summary;
    }
    throw ConfigError("unknown export kind '" + name + "' (expected rounds, devices or summary)");
}

namespace {

AccuracyWeighting record_weighting(const ExperimentRecord& record)
{
    if (record.final) {
        return record.final->weighting;
    }
    const auto& cfg = record.config;
    if (cfg.contains("eval") && cfg["eval"].contains("weighting") && cfg["eval"]["weighting"].is_string()) {
        return weighting_from_string(cfg["eval"]["weighting"].get<std::string>());
    }
    return AccuracyWeighting::per_sample;
}

}  // namespace

std::string export_csv(const ExperimentRecord& record, CsvKind kind)
{
    std::string out;
    switch (kind) {
    case CsvKind::rounds: {
        const AccuracyWeighting weighting = record_weighting(record);
        out += "round,train_loss,eval_acc,cumulative_flops,cumulative_bytes_up,cumulative_bytes_down\n";
        for (const auto& r : record.rounds) {
            std::string acc;
            if (r.evaluated && !r.eval.empty()) {
                acc = format_number(summarize_accuracy(r.eval, weighting).mean);
            }
            out += fmt::format("{},{},{},{},{},{}\n", r.round, format_number(r.train_loss), acc, r.cumulative.flops,
                               r.cumulative.bytes_up, r.cumulative.bytes_down);
        }
        break;
    }
    case CsvKind::devices:
        out += "device_id,n_test,accuracy\n";
        if (record.final) {
            for (const auto& d : record.final->devices) {
                out += fmt::format("{},{},{}\n", d.device_id, d.sample_count, format_number(d.accuracy));
            }
        }
        break;
    case CsvKind::summary:
        out += "weighting,n_devices,mean,p10,p25,p50,p75,p90\n";
        if (record.final && record.final->summary) {
            const auto& s = *record.final->summary;
            out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(s.weighting), s.n_devices, format_number(s.mean),
                               format_number(s.p10), format_number(s.p25), format_number(s.p50),
                               format_number(s.p75), format_number(s.p90));
        }
        break;
    }
    return out;
}

}  // namespace fedsim

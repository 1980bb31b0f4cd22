// fedsim command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "fedsim/config.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/error.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/record.hpp"
#include "fedsim/runner.hpp"
#include "fedsim/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

unsigned default_workers()
{
    if (const char* env = std::getenv("FEDSIM_WORKERS"); env != nullptr && *env != '\0') {
        try {
            const long v = std::stol(env);
            if (v >= 1) {
                return static_cast<unsigned>(v);
            }
        } catch (const std::exception&) {
        }
        spdlog::warn("ignoring FEDSIM_WORKERS='{}' (expected a positive integer)", env);
    }
    return 1;
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw fedsim::FormatError("cannot open '" + path.string() + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw fedsim::ArgumentError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
}

void print_stats(const fedsim::FederatedDataset& ds)
{
    const auto s = fedsim::dataset_stats(ds);
    ordered_json line{{"devices", s.num_devices},
                      {"samples", s.total_samples},
                      {"mean_samples_per_device", s.mean_samples_per_device},
                      {"stdev_samples_per_device", s.stdev_samples_per_device},
                      {"feature_dim", ds.feature_dim()},
                      {"num_classes", ds.num_classes()}};
    std::cout << line.dump() << '\n';
}

fedsim::SplitFractions parse_fractions(const std::string& text)
{
    std::vector<double> parts;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw fedsim::ConfigError("--fractions: '" + item + "' is not a number");
        }
    }
    if (parts.size() != 3) {
        throw fedsim::ConfigError("--fractions: expected three comma-separated values");
    }
    return {parts[0], parts[1], parts[2]};
}

ordered_json summary_line(const std::string& type, const fedsim::AccuracySummary& s)
{
    ordered_json line{{"type", type}};
    line.update(fedsim::summary_to_json(s));
    return line;
}

std::string csv_row(const std::string& group, const fedsim::AccuracySummary& s)
{
    return fmt::format("{},{},{},{},{},{},{},{}\n", group, fedsim::to_string(s.weighting), fedsim::format_number(s.mean),
                       fedsim::format_number(s.p10), fedsim::format_number(s.p25), fedsim::format_number(s.p50),
                       fedsim::format_number(s.p75), fedsim::format_number(s.p90));
}

struct MetricsOptions {
    std::string log;
    std::string weighting;
    std::optional<double> threshold;
    std::string dataset;
    std::string out;
    std::string csv;
};

void run_metrics(const MetricsOptions& opt)
{
    const auto record = fedsim::read_record(opt.log);
    if (!record.final) {
        throw fedsim::FormatError(opt.log + ": log has no final record (run incomplete?)");
    }
    const auto& fin = *record.final;
    const auto weighting = opt.weighting.empty() ? fin.weighting : fedsim::weighting_from_string(opt.weighting);

    std::map<std::string, std::string> hierarchy = fin.hierarchy;
    if (!opt.dataset.empty()) {
        hierarchy = fedsim::load_dataset(opt.dataset).hierarchy();
    }

    std::string report;
    std::string csv = "group,weighting,mean,p10,p25,p50,p75,p90\n";
    if (fin.devices.empty()) {
        throw fedsim::ArgumentError(opt.log + ": final record has no device accuracies");
    }
    const auto overall = fedsim::summarize_accuracy(fin.devices, weighting);
    auto head = summary_line("summary", overall);
    head["algorithm"] = fin.algorithm;
    head["cumulative_flops"] = fin.cumulative.flops;
    head["cumulative_bytes_up"] = fin.cumulative.bytes_up;
    head["cumulative_bytes_down"] = fin.cumulative.bytes_down;
    report += head.dump() + '\n';
    csv += csv_row("all", overall);

    if (!hierarchy.empty()) {
        for (const auto& [group, s] : fedsim::stratified_accuracy(fin.devices, hierarchy, weighting)) {
            auto line = summary_line("group", s);
            line["group"] = group;
            report += line.dump() + '\n';
            csv += csv_row(group, s);
        }
    }

    if (opt.threshold) {
        const auto b = fedsim::systems_budget(record.rounds, *opt.threshold, weighting);
        ordered_json line{{"type", "budget"},
                          {"threshold", b.threshold},
                          {"weighting", fedsim::to_string(weighting)},
                          {"reached", b.reached}};
        line["round_reached"] = b.round_reached ? ordered_json(*b.round_reached) : ordered_json(nullptr);
        line["total_flops"] = b.total_flops;
        line["total_bytes_up"] = b.total_bytes_up;
        line["total_bytes_down"] = b.total_bytes_down;
        report += line.dump() + '\n';
    }

    write_text(opt.out, report);
    if (!opt.csv.empty()) {
        write_text(opt.csv, csv);
    }
}

int exit_code(fedsim::ErrorKind kind)
{
    switch (kind) {
    case fedsim::ErrorKind::config:
        return 1;
    case fedsim::ErrorKind::data:
        return 2;
    case fedsim::ErrorKind::runtime:
        return 3;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv)
{
    spdlog::set_pattern("fedsim: %l: %v");

    CLI::App app{"federated learning simulator"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // generate-synth
    fedsim::SynthConfig synth;
    std::string synth_out;
    unsigned synth_workers = default_workers();
    auto* gen = app.add_subcommand("generate-synth", "generate the synthetic federated dataset");
    gen->add_option("--tasks", synth.num_tasks, "number of devices")->capture_default_str();
    gen->add_option("--cluster-probs", synth.cluster_probs, "mixture weights, one per cluster")
        ->delimiter(',')
        ->capture_default_str();
    gen->add_option("--latent-dim", synth.latent_dim)->capture_default_str();
    gen->add_option("--feature-dim", synth.feature_dim)->capture_default_str();
    gen->add_option("--num-classes", synth.num_classes)->capture_default_str();
    gen->add_option("--logit-noise-std", synth.logit_noise_std)->capture_default_str();
    gen->add_option("--lognormal-mu", synth.lognormal_mu)->capture_default_str();
    gen->add_option("--lognormal-sigma", synth.lognormal_sigma)->capture_default_str();
    gen->add_option("--sample-offset", synth.sample_offset)->capture_default_str();
    gen->add_option("--sample-cap", synth.sample_cap)->capture_default_str();
    gen->add_option("--seed", synth.seed)->capture_default_str();
    gen->add_option("--workers", synth_workers)->check(CLI::PositiveNumber);
    gen->add_option("--out", synth_out, "output dataset file")->required();

    // stats
    std::string stats_in;
    auto* stats = app.add_subcommand("stats", "print device and sample counts");
    stats->add_option("dataset", stats_in)->required();

    // filter
    std::string filter_in, filter_out;
    std::size_t min_samples = 0;
    auto* filter = app.add_subcommand("filter", "drop devices with fewer than k samples");
    filter->add_option("dataset", filter_in)->required();
    filter->add_option("--min-samples", min_samples)->required();
    filter->add_option("--out", filter_out)->required();

    // split
    std::string split_in, split_dir, fractions = "0.6,0.2,0.2";
    std::uint64_t split_seed = 0;
    auto* split = app.add_subcommand("split", "split every device into train/val/test (train.json, val.json, test.json)");
    split->add_option("dataset", split_in)->required();
    split->add_option("--fractions", fractions)->capture_default_str();
    split->add_option("--seed", split_seed)->capture_default_str();
    split->add_option("--out-dir", split_dir)->required();

    // subsample
    std::string sub_in, sub_out;
    std::optional<std::size_t> sub_count;
    std::optional<double> sub_fraction;
    std::uint64_t sub_seed = 0;
    auto* sub = app.add_subcommand("subsample", "keep a seeded random subset of devices");
    sub->add_option("dataset", sub_in)->required();
    auto* count_opt = sub->add_option("--count", sub_count);
    auto* frac_opt = sub->add_option("--fraction", sub_fraction);
    count_opt->excludes(frac_opt);
    sub->add_option("--seed", sub_seed)->capture_default_str();
    sub->add_option("--out", sub_out)->required();

    // mix-iid
    std::string mix_in, mix_out;
    std::uint64_t mix_seed = 0;
    auto* mix = app.add_subcommand("mix-iid", "pool every sample into one shuffled device");
    mix->add_option("dataset", mix_in)->required();
    mix->add_option("--seed", mix_seed)->capture_default_str();
    mix->add_option("--out", mix_out)->required();

    // run
    std::string run_config, run_preset, run_out;
    std::optional<unsigned> run_workers;
    auto* run = app.add_subcommand("run", "run one experiment and write its log");
    auto* cfg_opt = run->add_option("--config", run_config, "experiment config file (JSON)");
    auto* preset_opt = run->add_option("--preset", run_preset, "shipped preset name");
    cfg_opt->excludes(preset_opt);
    run->add_option("--out", run_out, "log file (overrides the config's output)");
    run->add_option("--workers", run_workers, "client threads (default: $FEDSIM_WORKERS or 1)")
        ->check(CLI::PositiveNumber);

    // presets
    bool preset_dump = false;
    std::string preset_name;
    auto* presets = app.add_subcommand("presets", "list shipped presets, or print one as a config file");
    presets->add_option("name", preset_name);
    presets->add_flag("--dump", preset_dump, "print the named preset's config");

    // metrics
    MetricsOptions mopt;
    auto* metrics = app.add_subcommand("metrics", "summarize a run log");
    metrics->add_option("--log", mopt.log)->required();
    metrics->add_option("--weighting", mopt.weighting, "per_device or per_sample (default: the run's)");
    metrics->add_option("--threshold", mopt.threshold, "report the cost of first reaching this accuracy");
    metrics->add_option("--dataset", mopt.dataset, "dataset whose hierarchy stratifies the report");
    metrics->add_option("--out", mopt.out, "report file (default stdout)");
    metrics->add_option("--csv", mopt.csv, "CSV table output");

    // export
    std::string export_log, export_kind, export_out;
    auto* exp = app.add_subcommand("export", "convert a run log to CSV");
    exp->add_option("--log", export_log)->required();
    exp->add_option("--kind", export_kind, "rounds, devices or summary")->required();
    exp->add_option("--out", export_out, "CSV file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            const auto ds = fedsim::generate_synthetic(synth, synth_workers);
            fedsim::save_dataset(ds, synth_out);
        } else if (*stats) {
            print_stats(fedsim::load_dataset(stats_in));
        } else if (*filter) {
            fedsim::save_dataset(fedsim::filter_min_samples(fedsim::load_dataset(filter_in), min_samples), filter_out);
        } else if (*split) {
            const auto f = parse_fractions(fractions);
            const auto parts = fedsim::split_train_val_test(fedsim::load_dataset(split_in), f, split_seed);
            fs::create_directories(split_dir);
            fedsim::save_dataset(parts.train, fs::path(split_dir) / "train.json");
            fedsim::save_dataset(parts.val, fs::path(split_dir) / "val.json");
            fedsim::save_dataset(parts.test, fs::path(split_dir) / "test.json");
        } else if (*sub) {
            if (!sub_count && !sub_fraction) {
                throw fedsim::ConfigError("subsample: give --count or --fraction");
            }
            const auto ds = fedsim::load_dataset(sub_in);
            fedsim::save_dataset(sub_count ? fedsim::subsample_devices(ds, *sub_count, sub_seed)
                                           : fedsim::subsample_devices_fraction(ds, *sub_fraction, sub_seed),
                                 sub_out);
        } else if (*mix) {
            fedsim::save_dataset(fedsim::mix_iid(fedsim::load_dataset(mix_in), mix_seed), mix_out);
        } else if (*run) {
            fedsim::ExperimentConfig config;
            if (!run_preset.empty()) {
                config = fedsim::preset_config(run_preset);
            } else if (!run_config.empty()) {
                config = fedsim::parse_config(read_text(run_config));
            } else {
                throw fedsim::ConfigError("run: give --config or --preset");
            }
            if (!run_out.empty()) {
                config.output = run_out;
            }
            config.workers = run_workers ? *run_workers : default_workers();
            fedsim::run_experiment(config);
        } else if (*presets) {
            if (preset_name.empty()) {
                for (const auto& p : fedsim::list_presets()) {
                    std::cout << fmt::format("{:<26} {}\n", p.name, p.description);
                }
            } else {
                const auto config = fedsim::preset_config(preset_name);
                if (preset_dump) {
                    std::cout << fedsim::config_to_json(config).dump(2) << '\n';
                } else {
                    std::cout << preset_name << '\n';
                }
            }
        } else if (*metrics) {
            run_metrics(mopt);
        } else if (*exp) {
            const auto kind = fedsim::csv_kind_from_string(export_kind);
            write_text(export_out, fedsim::export_csv(fedsim::read_record(export_log), kind));
        }
    } catch (const fedsim::Error& e) {
        spdlog::error("{}", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
    return 0;
}

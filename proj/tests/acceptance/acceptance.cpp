// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "fedsim/fedalgo.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/record.hpp"
#include "fedsim/runner.hpp"
#include "fedsim/synthgen.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fedsim;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

fs::path work_dir()
{
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / fmt::format("fedsim_acceptance_{}", static_cast<long>(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

ExperimentConfig reseeded(ExperimentConfig c, std::uint64_t seed)
{
    c.seed = seed;
    c.fed.seed = seed;
    c.dataset.synth->seed = seed;
    return c;
}

ExperimentRecord run(const ExperimentConfig& c)
{
    std::ostringstream out;
    run_experiment(c, out);
    return parse_record(out.str());
}

double final_mean(const ExperimentRecord& r)
{
    return r.final->summary->mean;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

// 1. Local models beat FedAvg on the single-cluster synthetic set, both near
// the published numbers.
Outcome table2()
{
    const auto start = std::chrono::steady_clock::now();
    double fedavg = 0.0;
    double local = 0.0;
    for (auto s : kSeeds) {
        fedavg += final_mean(run(reseeded(preset_config("synth-table2-fedavg"), s)));
        local += final_mean(run(reseeded(preset_config("synth-table2-local"), s)));
    }
    fedavg /= static_cast<double>(kSeeds.size());
    local /= static_cast<double>(kSeeds.size());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool gap = local - fedavg >= 0.05;
    const bool near_local = std::abs(local - 0.8734) <= 0.10;
    const bool near_fedavg = std::abs(fedavg - 0.7189) <= 0.10;
    const bool fast = seconds < 600.0;
    return {gap && near_local && near_fedavg && fast,
            fmt::format("local {:.4f} (ref 0.8734), fedavg {:.4f} (ref 0.7189), gap {:+.4f}, {:.1f}s", local, fedavg,
                        local - fedavg, seconds)};
}

// 2. More local epochs: higher final training loss, more client dispersion.
Outcome divergence()
{
    const std::size_t epochs[] = {1, 4, 16, 64};
    int loss_ok = 0;
    int disp_ok = 0;
    std::string detail;
    for (auto s : kSeeds) {
        double loss[4];
        double disp[4];
        for (int i = 0; i < 4; ++i) {
            const auto rec = run(reseeded(preset_config(fmt::format("synth-divergence-E{}", epochs[i])), s));
            loss[i] = rec.rounds.back().train_loss;
            double sum = 0.0;
            for (const auto& r : rec.rounds) {
                sum += r.client_dispersion;
            }
            disp[i] = sum / static_cast<double>(rec.rounds.size());
        }
        loss_ok += loss[3] > loss[0] ? 1 : 0;
        disp_ok += disp[0] <= disp[1] && disp[1] <= disp[2] && disp[2] <= disp[3] ? 1 : 0;
        detail += fmt::format(" s{}: loss {:.3f}->{:.3f} disp {:.2f}/{:.2f}/{:.2f}/{:.2f};", s, loss[0], loss[3],
                              disp[0], disp[1], disp[2], disp[3]);
    }
    return {loss_ok >= 4 && disp_ok >= 4,
            fmt::format("loss E64>E1 in {}/5, dispersion monotone in {}/5;{}", loss_ok, disp_ok, detail)};
}

// 3. Full-participation, full-batch FedAvg equals centralized gradient descent.
Outcome centralized_gd()
{
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto ds = oracle::random_dataset(rng, 2 + t % 6, 1 + t % 5, 2 + t % 4, 1, 10);
        const ModelSpec spec{ModelKind::linear, ds.feature_dim(), ds.num_classes(), 0};
        const auto params = oracle::random_params(rng, spec.num_params(), 0.5);
        FedConfig cfg;
        cfg.clients_per_round = ds.num_devices();
        cfg.local_epochs = 1;
        cfg.batch_size = 10;
        cfg.client_lr = 0.05 + 0.05 * t;
        cfg.seed = static_cast<std::uint64_t>(t);
        const TrainingState state{spec, params, &ds, {}};
        const auto got = fedavg_round(state, cfg, 0).params;
        worst = std::max(worst, max_abs_diff(got, oracle::centralized_gd_step(spec, params, ds, cfg.client_lr)));
    }
    return {worst < 1e-10, fmt::format("max abs diff {:.3e} over 20 instances", worst)};
}

// 4. Analytic gradients against central finite differences.
Outcome gradient_check()
{
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> dim(1, 10);
    std::uniform_int_distribution<std::size_t> cls(2, 6);
    std::uniform_int_distribution<std::size_t> rows(1, 8);
    double worst[2] = {0.0, 0.0};
    for (int t = 0; t < 50; ++t) {
        for (int kind = 0; kind < 2; ++kind) {
            ModelSpec spec{kind == 0 ? ModelKind::linear : ModelKind::one_hidden, dim(rng), cls(rng), 0};
            if (kind == 1) {
                spec.hidden_dim = dim(rng);
            }
            const auto p = oracle::random_params(rng, spec.num_params(), 0.8);
            const std::size_t m = rows(rng);
            std::vector<double> x = oracle::random_params(rng, m * spec.feature_dim, 1.0);
            std::vector<std::int32_t> y(m);
            for (auto& v : y) {
                v = static_cast<std::int32_t>(rng() % spec.num_classes);
            }
            const auto g = gradient(spec, p, BatchView{x, y, spec.feature_dim}).grad;
            const double h = 1e-5;
            for (std::size_t i = 0; i < p.size(); ++i) {
                auto plus = p;
                auto minus = p;
                plus[i] += h;
                minus[i] -= h;
                const double fd = static_cast<double>(
                    (oracle::loss(spec, plus, x, y) - oracle::loss(spec, minus, x, y)) / (2.0L * h));
                const double scale = std::max({std::abs(g[i]), std::abs(fd), 1e-6});
                worst[kind] = std::max(worst[kind], std::abs(g[i] - fd) / scale);
            }
        }
    }
    return {worst[0] < 1e-4 && worst[1] < 1e-4,
            fmt::format("max relative error linear {:.2e}, one_hidden {:.2e} (50 cases each)", worst[0], worst[1])};
}

// 5. Quantiles against an independent sort-and-interpolate reference and
// against explicit multiset expansion.
Outcome quantiles()
{
    const double levels[] = {10, 25, 50, 75, 90};
    auto summary_vec = [](const AccuracySummary& s) { return std::vector<double>{s.p10, s.p25, s.p50, s.p75, s.p90}; };
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_unweighted = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng() % 60;
        std::vector<double> acc(n);
        std::vector<DeviceAccuracy> entries;
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] = u(rng);
            entries.push_back({fmt::format("d{}", i), acc[i], 1 + rng() % 100});
        }
        const auto got = summary_vec(summarize_accuracy(entries, AccuracyWeighting::per_device));
        for (int i = 0; i < 5; ++i) {
            worst_unweighted = std::max(worst_unweighted, std::abs(got[i] - oracle::percentile(acc, levels[i])));
        }
    }

    double worst_weighted = 0.0;
    std::size_t cases = 0;
    for (std::size_t n = 1; n <= 8; ++n) {
        std::vector<std::size_t> w(n, 1);
        while (true) {
            std::vector<double> acc(n);
            std::vector<DeviceAccuracy> entries;
            for (std::size_t i = 0; i < n; ++i) {
                acc[i] = std::round(u(rng) * 10.0) / 10.0;
                entries.push_back({fmt::format("d{}", i), acc[i], w[i]});
            }
            const auto got = summary_vec(summarize_accuracy(entries, AccuracyWeighting::per_sample));
            for (int i = 0; i < 5; ++i) {
                worst_weighted =
                    std::max(worst_weighted, std::abs(got[i] - oracle::expanded_percentile(acc, w, levels[i])));
            }
            ++cases;
            std::size_t pos = 0;
            while (pos < n && w[pos] == 5) {
                w[pos++] = 1;
            }
            if (pos == n) {
                break;
            }
            ++w[pos];
        }
    }
    return {worst_unweighted <= 1e-12 && worst_weighted <= 1e-12,
            fmt::format("unweighted max err {:.1e} (1000 inputs), weighted max err {:.1e} ({} weight vectors)",
                        worst_unweighted, worst_weighted, cases)};
}

// 6. Bytes and FLOPs of a FedAvg run in closed form.
Outcome accounting()
{
    ExperimentConfig c;
    c.name = "accounting";
    c.seed = 9;
    SynthConfig s;
    s.num_tasks = 40;
    s.feature_dim = 12;
    s.num_classes = 4;
    s.sample_cap = 120;
    s.seed = 9;
    c.dataset.synth = s;
    c.algorithm = Algorithm::fedavg;
    c.fed.clients_per_round = 7;
    c.fed.rounds = 12;
    c.fed.local_epochs = 3;
    c.fed.batch_size = 4;
    c.fed.eval_every = 4;
    const std::uint64_t C = 7;
    const std::uint64_t R = 12;
    const std::uint64_t P = (12 + 1) * 4;

    const auto data = prepare_data(c);
    const auto rec = run(c);
    std::uint64_t flops = 0;
    bool rounds_ok = rec.rounds.size() == R;
    for (const auto& r : rec.rounds) {
        for (const auto& id : r.participants) {
            flops += oracle::linear_client_flops(12, 4, data.train.find(id)->size(), 3, 4);
        }
        rounds_ok = rounds_ok && r.cumulative.flops == flops;
    }
    const auto& fin = rec.final->cumulative;
    const bool ok = rounds_ok && fin.bytes_up == R * C * P * 4 && fin.bytes_down == R * C * P * 4 && fin.flops == flops;
    return {ok, fmt::format("bytes_up {} (expect {}), flops {} (expect {}), per-round totals {}", fin.bytes_up,
                            R * C * P * 4, fin.flops, flops, rounds_ok ? "match" : "MISMATCH")};
}

// 7. Worker count does not change the log; equal seeds give equal datasets.
Outcome determinism()
{
    auto c = preset_config("synth-table2-fedavg");
    c.workers = 1;
    std::ostringstream a;
    run_experiment(c, a);
    c.workers = 8;
    std::ostringstream b;
    run_experiment(c, b);

    SynthConfig s = *c.dataset.synth;
    const bool same_data = serialize_dataset(generate_synthetic(s, 1)) == serialize_dataset(generate_synthetic(s, 4));
    s.seed += 1;
    const bool seed_matters = serialize_dataset(generate_synthetic(s)) != serialize_dataset(generate_synthetic(*c.dataset.synth));
    const bool same_log = a.str() == b.str() && !a.str().empty();
    return {same_log && same_data && seed_matters,
            fmt::format("logs {} ({} bytes), datasets {}, different seed {}", same_log ? "identical" : "DIFFER",
                        a.str().size(), same_data ? "identical" : "DIFFER",
                        seed_matters ? "differs" : "IDENTICAL")};
}

int shell(const std::string& command)
{
    return std::system((command + " > /dev/null 2>&1").c_str());
}

// 8. Minimum-sample filtering through the command-line tool, end to end.
Outcome filter_pipeline()
{
    const fs::path dir = work_dir() / "filter";
    fs::create_directories(dir);
    const std::string cli = FEDSIM_CLI_PATH;
    const auto raw = dir / "raw.json";
    if (shell(fmt::format("{} generate-synth --tasks 300 --feature-dim 10 --num-classes 4 --seed 3 --sample-offset 1 "
                          "--out {}",
                          cli, raw.string())) != 0) {
        return {false, "generate-synth failed"};
    }
    std::vector<std::size_t> counts;
    std::string detail;
    bool reports = true;
    for (std::size_t k : {3, 10, 30}) {
        const auto filtered = dir / fmt::format("k{}.json", k);
        if (shell(fmt::format("{} filter {} --min-samples {} --out {}", cli, raw.string(), k, filtered.string())) !=
            0) {
            return {false, fmt::format("filter k={} failed", k)};
        }
        counts.push_back(load_dataset(filtered).num_devices());

        ExperimentConfig c;
        c.name = fmt::format("filter-k{}", k);
        c.seed = 3;
        c.dataset.path = filtered.string();
        c.algorithm = Algorithm::fedavg;
        c.fed.clients_per_round = 10;
        c.fed.rounds = 20;
        c.fed.eval_every = 5;
        const auto config_path = dir / fmt::format("k{}.config.json", k);
        std::ofstream(config_path) << config_to_json(c).dump(2);
        const auto log = dir / fmt::format("k{}.jsonl", k);
        const auto report = dir / fmt::format("k{}.report.jsonl", k);
        const auto csv = dir / fmt::format("k{}.csv", k);
        const int rc_run = shell(fmt::format("{} run --config {} --out {} --workers 2", cli, config_path.string(),
                                             log.string()));
        const int rc_metrics =
            shell(fmt::format("{} metrics --log {} --threshold 0.5 --out {} --csv {}", cli, log.string(),
                              report.string(), csv.string()));
        bool ok = rc_run == 0 && rc_metrics == 0 && fs::exists(report) && fs::exists(csv);
        double mean = -1.0;
        if (ok) {
            std::ifstream in(report);
            std::string first;
            std::getline(in, first);
            const auto line = nlohmann::json::parse(first);
            ok = line.value("type", "") == "summary";
            mean = line.value("mean", -1.0);
            std::ifstream table(csv);
            std::string header;
            std::getline(table, header);
            ok = ok && header == "group,weighting,mean,p10,p25,p50,p75,p90";
        }
        reports = reports && ok;
        detail += fmt::format(" k={}: {} devices, mean acc {:.3f}{};", k, counts.back(), mean, ok ? "" : " (REPORT FAILED)");
    }
    const bool monotone = counts[0] >= counts[1] && counts[1] >= counts[2];
    return {monotone && reports, fmt::format("device counts non-increasing: {};{}", monotone ? "yes" : "NO", detail)};
}

// 9. Reptile schedule, interpolation endpoints, and fine-tuning benefit.
Outcome reptile()
{
    const auto preset = preset_config("synth-reptile-2cluster");
    const double first = reptile_meta_lr(preset.fed, 0);
    const double last = reptile_meta_lr(preset.fed, preset.fed.rounds - 1);
    const bool schedule = first == 2.0 && last == 0.0;

    std::mt19937_64 rng(31);
    SynthConfig s;
    s.num_tasks = 12;
    s.feature_dim = 6;
    s.num_classes = 3;
    s.sample_cap = 40;
    s.seed = 31;
    const auto train = split_train_val_test(generate_synthetic(s), {}, 31).train;
    const ModelSpec spec{ModelKind::linear, 6, 3, 0};
    const auto init = oracle::random_params(rng, spec.num_params(), 0.3);
    const TrainingState state{spec, init, &train, {}};
    FedConfig one;
    one.clients_per_round = 1;
    one.meta_lr_start = 1.0;
    one.meta_lr_end = 1.0;
    one.rounds = 4;
    one.seed = 8;
    double identity_err = 0.0;
    double fixed_err = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        const auto res = reptile_round(state, one, r);
        const auto& id = res.log.participants.at(0);
        auto stream = client_stream(one.seed, r, id);
        ParamBlock adapted = init;
        run_sgd_steps(spec, adapted, *train.find(id), one.inner_steps, one.inner_batch, one.client_lr, stream);
        identity_err = std::max(identity_err, max_abs_diff(res.params, adapted));

        FedConfig frozen = one;
        frozen.clients_per_round = 5;
        frozen.meta_lr_start = 0.0;
        frozen.meta_lr_end = 0.0;
        fixed_err = std::max(fixed_err, max_abs_diff(reptile_round(state, frozen, r).params, init));
    }
    const bool endpoints = identity_err <= 1e-12 && fixed_err <= 1e-12;

    double tuned = 0.0;
    double plain = 0.0;
    int per_seed = 0;
    for (auto seed : kSeeds) {
        auto c = reseeded(preset, seed);
        const double t = final_mean(run(c));
        c.eval.finetune_steps = 0;
        const double p = final_mean(run(c));
        tuned += t;
        plain += p;
        per_seed += t >= p ? 1 : 0;
    }
    tuned /= static_cast<double>(kSeeds.size());
    plain /= static_cast<double>(kSeeds.size());
    return {schedule && endpoints && tuned >= plain,
            fmt::format("alpha endpoints ({}, {}); identity err {:.1e}, fixed-point err {:.1e}; fine-tuned {:.4f} vs "
                        "plain {:.4f} (better in {}/5 seeds)",
                        first, last, identity_err, fixed_err, tuned, plain, per_seed)};
}

}  // namespace

int main()
{
    spdlog::set_level(spdlog::level::err);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1 synthetic local vs FedAvg accuracy", table2},
        {"2 client drift grows with local epochs", divergence},
        {"3 FedAvg equals centralized GD", centralized_gd},
        {"4 gradient vs finite differences", gradient_check},
        {"5 quantile oracles", quantiles},
        {"6 systems accounting closed form", accounting},
        {"7 determinism", determinism},
        {"8 min-sample filter through the CLI", filter_pipeline},
        {"9 Reptile mechanism", reptile},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
    }
    fs::remove_all(work_dir());
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}

#include "fedsim/runner.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "fedsim/error.hpp"
#include "fedsim/fedalgo.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/record.hpp"
#include "fedsim/synthgen.hpp"

namespace fedsim {

namespace {

// Keeps only the devices of `ds` whose ids are in `ids` (sorted).
FederatedDataset restrict_to(const FederatedDataset& ds, const std::vector<std::string>& ids, bool keep)
{
    FederatedDataset out(ds.feature_dim(), ds.num_classes());
    for (const auto& d : ds.devices()) {
        if (std::binary_search(ids.begin(), ids.end(), d.id) == keep) {
            out.add_device(d);
        }
    }
    for (const auto& [id, group] : ds.hierarchy()) {
        if (out.find(id) != nullptr) {
            out.set_group(id, group);
        }
    }
    return out;
}

// A seeded, sorted choice of round(fraction * n) ids (at least one).
std::vector<std::string> choose_ids(const FederatedDataset& ds, double fraction, std::uint64_t seed, StreamTag tag)
{
    const std::size_t n = ds.num_devices();
    auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    count = std::clamp<std::size_t>(count, n == 0 ? 0 : 1, n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto stream = RandomStream::derive(seed, tag);
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(idx[i], idx[i + stream.below(n - i)]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> ids;
    for (std::size_t i : idx) {
        ids.push_back(ds.device(i).id);
    }
    return ids;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config)
{
    FederatedDataset ds = config.dataset.path ? load_dataset(*config.dataset.path)
                                              : generate_synthetic(*config.dataset.synth, config.workers);
    const auto& pre = config.preprocess;
    if (pre.min_samples > 0) {
        ds = filter_min_samples(ds, pre.min_samples);
    }
    if (pre.subsample_count) {
        ds = subsample_devices(ds, *pre.subsample_count, config.seed);
    } else if (pre.subsample_fraction) {
        ds = subsample_devices_fraction(ds, *pre.subsample_fraction, config.seed);
    }
    if (ds.empty()) {
        throw ArgumentError("no devices left after preprocessing");
    }
    if (pre.mix_iid) {
        ds = mix_iid(ds, config.seed);
    }

    SplitResult split = split_train_val_test(ds, pre.split, config.seed);
    PreparedData data;
    data.hierarchy = ds.hierarchy();
    data.eval_test = split.test;
    data.finetune_train = split.train;
    data.train = std::move(split.train);
    data.val = std::move(split.val);
    data.test = std::move(split.test);

    if (config.eval.holdout_fraction > 0.0 && config.algorithm != Algorithm::local) {
        const auto held_out = choose_ids(ds, config.eval.holdout_fraction, config.seed, StreamTag::holdout);
        data.eval_test = restrict_to(data.test, held_out, true);
        data.train = restrict_to(data.train, held_out, false);
        if (data.train.empty()) {
            throw ArgumentError("holdout_fraction leaves no training devices");
        }
    }
    if (config.eval.device_fraction < 1.0) {
        const auto scored = choose_ids(data.eval_test, config.eval.device_fraction, config.seed, StreamTag::eval);
        data.eval_test = restrict_to(data.eval_test, scored, true);
    }
    return data;
}

namespace {

class Experiment {
public:
    Experiment(const ExperimentConfig& config, PreparedData data)
        : config_(config), data_(std::move(data))
    {
        spec_.kind = config.model.kind;
        spec_.feature_dim = data_.train.feature_dim();
        spec_.num_classes = data_.train.num_classes();
        spec_.hidden_dim = config.model.kind == ModelKind::one_hidden ? config.model.hidden_dim : 0;
        spec_.validate();
        const InitScheme init = config.model.init == InitScheme::Kind::zeros
                                    ? InitScheme::zeros()
                                    : InitScheme::gaussian(config.model.init_std, config.seed);
        initial_ = init_params(spec_, init);
    }

    void run(RecordWriter& writer)
    {
        FinalRecord fin;
        fin.algorithm = to_string(config_.algorithm);
        fin.weighting = config_.eval.weighting;

        switch (config_.algorithm) {
        case Algorithm::fedavg:
        case Algorithm::minibatch_sgd:
        case Algorithm::reptile:
            run_federated(writer, fin);
            break;
        case Algorithm::local:
            run_local(fin);
            break;
        case Algorithm::global_iid: {
            const auto& g = config_.global_iid;
            GlobalIidResult result =
                train_global_iid(data_.train, spec_, initial_, g.epochs, g.lr, g.batch_size, config_.seed);
            fin.cumulative.flops = result.flops;
            fin.devices = evaluate(result.params);
            break;
        }
        }

        if (!fin.devices.empty()) {
            fin.summary = summarize_accuracy(fin.devices, config_.eval.weighting);
        }
        for (const auto& d : fin.devices) {
            if (auto it = data_.hierarchy.find(d.device_id); it != data_.hierarchy.end()) {
                fin.hierarchy.emplace(it->first, it->second);
            }
        }
        writer.final(fin);
    }

private:
    std::vector<DeviceAccuracy> evaluate(std::span<const double> params) const
    {
        const auto& e = config_.eval;
        if (e.finetune_steps > 0) {
            const double lr = e.finetune_lr > 0.0 ? e.finetune_lr : config_.fed.client_lr;
            return evaluate_personalized(spec_, params, data_.finetune_train, data_.eval_test,
                                         e.finetune_steps, e.finetune_batch, lr, config_.seed, config_.workers);
        }
        return evaluate_devices(spec_, params, data_.eval_test, config_.workers);
    }

    void run_federated(RecordWriter& writer, FinalRecord& fin)
    {
        FedConfig fed = config_.fed;
        fed.seed = config_.seed;
        TrainingState state{spec_, initial_, &data_.train, {}};
        for (std::size_t r = 0; r < fed.rounds; ++r) {
            RoundResult result;
            switch (config_.algorithm) {
            case Algorithm::minibatch_sgd:
                result = minibatch_sgd_round(state, fed, r, config_.workers);
                break;
            case Algorithm::reptile:
                result = reptile_round(state, fed, r, config_.workers);
                break;
            default:
                result = fedavg_round(state, fed, r, config_.workers);
                break;
            }
            state.params = std::move(result.params);
            state.totals = result.log.cumulative;
            if ((r + 1) % fed.eval_every == 0 || r + 1 == fed.rounds) {
                result.log.eval = evaluate(state.params);
                result.log.evaluated = true;
            }
            writer.round(result.log);
        }
        fin.cumulative = state.totals;
        fin.devices = evaluate(state.params);
    }

    void run_local(FinalRecord& fin)
    {
        const auto& l = config_.local;
        const auto models = train_local(data_.train, data_.val, spec_, initial_, l.lr_grid, l.epochs, l.batch_size,
                                        config_.seed, config_.workers);
        for (const auto& [id, model] : models) {
            fin.cumulative.flops += model.flops;
        }
        for (const auto& device : data_.eval_test.devices()) {
            auto it = models.find(device.id);
            if (it == models.end()) {
                spdlog::warn("device '{}' has no local model (no training data); skipped", device.id);
                continue;
            }
            fin.devices.push_back(
                {device.id, accuracy_top1(spec_, it->second.params, device.view(spec_.feature_dim)), device.size()});
            fin.chosen_lr[device.id] = it->second.lr;
        }
    }

    const ExperimentConfig& config_;
    PreparedData data_;
    ModelSpec spec_;
    ParamBlock initial_;
};

}  // namespace

void run_experiment(const ExperimentConfig& config, std::ostream& out)
{
    const auto problems = validate_config(config);
    if (!problems.empty()) {
        std::string message = "invalid experiment config:";
        for (const auto& p : problems) {
            message += "\n  " + p;
        }
        throw ConfigError(message);
    }
    RecordWriter writer(out);
    writer.header(config_to_json(config));
    Experiment experiment(config, prepare_data(config));
    experiment.run(writer);
}

void run_experiment(const ExperimentConfig& config)
{
    if (config.output.empty()) {
        throw ConfigError("output: no output path given");
    }
    std::ofstream out(config.output, std::ios::binary);
    if (!out) {
        throw ArgumentError("cannot open '" + config.output + "' for writing");
    }
    run_experiment(config, out);
}

}  // namespace fedsim

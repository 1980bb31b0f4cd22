#include "fedsim/fedalgo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

std::vector<std::string> FedConfig::violations() const
{
    std::vector<std::string> out;
    auto require = [&out](bool ok, const char* message) {
        if (!ok) {
            out.emplace_back(message);
        }
    };
    require(clients_per_round >= 1, "fed.clients_per_round: must be at least 1");
    require(local_epochs >= 1, "fed.local_epochs: must be at least 1");
    require(batch_size >= 1, "fed.batch_size: must be at least 1");
    require(client_lr > 0.0 && std::isfinite(client_lr), "fed.client_lr: must be positive");
    require(eval_every >= 1, "fed.eval_every: must be at least 1");
    require(bytes_per_param >= 1, "fed.bytes_per_param: must be at least 1");
    require(data_fraction > 0.0 && data_fraction <= 1.0, "fed.data_fraction: must lie in (0, 1]");
    require(server_lr > 0.0 && std::isfinite(server_lr), "fed.server_lr: must be positive");
    require(std::isfinite(meta_lr_start), "fed.meta_lr_start: must be finite");
    require(std::isfinite(meta_lr_end), "fed.meta_lr_end: must be finite");
    require(inner_steps >= 1, "fed.inner_steps: must be at least 1");
    require(inner_batch >= 1, "fed.inner_batch: must be at least 1");
    return out;
}

std::vector<std::string> select_clients(const FederatedDataset& ds, std::size_t clients, std::size_t round,
                                        std::uint64_t seed)
{
    const std::size_t available = ds.num_devices();
    if (clients > available) {
        throw ConfigError("clients_per_round = " + std::to_string(clients) + " exceeds the " +
                          std::to_string(available) + " available devices");
    }
    std::vector<std::size_t> indices(available);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    auto stream = RandomStream::derive(seed, StreamTag::select, {round});
    for (std::size_t i = 0; i < clients; ++i) {
        const std::size_t j = i + stream.below(available - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(clients);
    std::sort(indices.begin(), indices.end());

    std::vector<std::string> ids;
    ids.reserve(clients);
    for (std::size_t index : indices) {
        ids.push_back(ds.device(index).id);
    }
    return ids;
}

RandomStream client_stream(std::uint64_t seed, std::size_t round, const std::string& device_id)
{
    return RandomStream::derive(seed, StreamTag::client, {round, hash_key(device_id)});
}

namespace {

// One SGD step on the rows `indices` of `device`; returns the FLOPs spent.
std::uint64_t step_on_rows(const ModelSpec& spec, ParamBlock& params, const DeviceData& device,
                           std::span<const std::size_t> indices, double lr, std::vector<double>& features,
                           std::vector<std::int32_t>& labels)
{
    gather_rows(device, spec.feature_dim, indices, features, labels);
    const GradResult g = gradient(spec, params, BatchView{features, labels, spec.feature_dim});
    sgd_step(params, g.grad, lr);
    return g.flops + update_flops(spec);
}

}  // namespace

LocalUpdate local_update(const ModelSpec& spec, std::span<const double> start, const DeviceData& device,
                         std::size_t epochs, std::size_t batch_size, double lr, RandomStream& rng)
{
    if (device.size() == 0) {
        throw ArgumentError("local_update on device '" + device.id + "' with no training data");
    }
    if (batch_size < 1) {
        throw ArgumentError("batch size must be at least 1");
    }
    LocalUpdate result;
    result.params.assign(start.begin(), start.end());
    result.num_samples = device.size();

    std::vector<std::size_t> order(device.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> features;
    std::vector<std::int32_t> labels;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
            const std::size_t count = std::min(batch_size, order.size() - begin);
            result.flops += step_on_rows(spec, result.params, device,
                                         std::span<const std::size_t>(order).subspan(begin, count), lr,
                                         features, labels);
        }
    }
    return result;
}

std::uint64_t run_sgd_steps(const ModelSpec& spec, ParamBlock& params, const DeviceData& device,
                            std::size_t steps, std::size_t batch_size, double lr, RandomStream& rng)
{
    if (steps == 0) {
        return 0;
    }
    if (device.size() == 0) {
        throw ArgumentError("run_sgd_steps on device '" + device.id + "' with no data");
    }
    if (batch_size < 1) {
        throw ArgumentError("batch size must be at least 1");
    }
    std::vector<std::size_t> order(device.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> features;
    std::vector<std::int32_t> labels;
    std::uint64_t flops = 0;
    std::size_t cursor = order.size();
    for (std::size_t step = 0; step < steps; ++step) {
        if (cursor >= order.size()) {
            rng.shuffle(std::span<std::size_t>(order));
            cursor = 0;
        }
        const std::size_t count = std::min(batch_size, order.size() - cursor);
        flops += step_on_rows(spec, params, device, std::span<const std::size_t>(order).subspan(cursor, count), lr,
                              features, labels);
        cursor += count;
    }
    return flops;
}

ParamBlock weighted_average(std::span<const ParamBlock> models, std::span<const double> weights)
{
    if (models.empty() || models.size() != weights.size()) {
        throw ArgumentError("weighted_average needs one weight per model and at least one model");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw ArgumentError("aggregation weights must be nonnegative");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw ArgumentError("aggregation weights sum to zero");
    }
    ParamBlock out(models.front().size(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (models[k].size() != out.size()) {
            throw ShapeError("aggregated models differ in size");
        }
        kernels::axpy(weights[k] / total, models[k], out);
    }
    return out;
}

double mean_pairwise_distance(std::span<const ParamBlock> models)
{
    if (models.size() < 2) {
        return 0.0;
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < models.size(); ++a) {
        for (std::size_t b = a + 1; b < models.size(); ++b) {
            total += std::sqrt(kernels::squared_distance(models[a], models[b]));
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

namespace {

struct ClientResult {
    bool ran = false;
    ParamBlock vec;  // model for fedavg/reptile, gradient for minibatch SGD
    double weight = 0.0;
    std::uint64_t flops = 0;
};

const DeviceData* participant_data(const TrainingState& state, const std::string& id)
{
    const DeviceData* device = state.train->find(id);
    if (device == nullptr || device->size() == 0) {
        spdlog::warn("device '{}' has no training data; skipped this round", id);
        return nullptr;
    }
    return device;
}

void require_state(const TrainingState& state)
{
    if (state.train == nullptr) {
        throw ArgumentError("training state has no training split");
    }
    if (state.params.size() != state.spec.num_params()) {
        throw ShapeError("global parameters do not match the model spec");
    }
}

// Sample-weighted training loss of `params` over the participants.
double participant_loss(const TrainingState& state, std::span<const double> params,
                        const std::vector<std::string>& participants, unsigned workers)
{
    std::vector<double> sums(participants.size(), 0.0);
    std::vector<std::size_t> counts(participants.size(), 0);
    parallel_for(participants.size(), workers, [&](std::size_t i) {
        const DeviceData* device = state.train->find(participants[i]);
        if (device == nullptr || device->size() == 0) {
            return;
        }
        const auto fwd = forward_loss(state.spec, params, device->view(state.spec.feature_dim));
        sums[i] = fwd.mean_loss * static_cast<double>(device->size());
        counts[i] = device->size();
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < sums.size(); ++i) {
        total += sums[i];
        n += counts[i];
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

struct Collected {
    std::vector<ParamBlock> vecs;
    std::vector<double> weights;
    std::vector<std::string> ids;
    std::uint64_t flops = 0;
};

Collected collect(std::vector<ClientResult>& results, const std::vector<std::string>& selected)
{
    Collected out;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].ran) {
            continue;
        }
        out.vecs.push_back(std::move(results[i].vec));
        out.weights.push_back(results[i].weight);
        out.ids.push_back(selected[i]);
        out.flops += results[i].flops;
    }
    if (out.vecs.empty()) {
        throw RoundError("no selected client had training data");
    }
    return out;
}

RoundLog make_log(const TrainingState& state, const FedConfig& config, std::size_t round, const Collected& c)
{
    RoundLog log;
    log.round = round;
    log.participants = c.ids;
    const std::uint64_t transfer =
        static_cast<std::uint64_t>(c.ids.size()) * state.spec.num_params() * config.bytes_per_param;
    log.cumulative.flops = state.totals.flops + c.flops;
    log.cumulative.bytes_up = state.totals.bytes_up + transfer;
    log.cumulative.bytes_down = state.totals.bytes_down + transfer;
    return log;
}

double client_weight(const FedConfig& config, std::size_t samples)
{
    return config.weighting == ClientWeighting::samples ? static_cast<double>(samples) : 1.0;
}

}  // namespace

RoundResult fedavg_round(const TrainingState& state, const FedConfig& config, std::size_t round, unsigned workers)
{
    require_state(state);
    const auto selected = select_clients(*state.train, config.clients_per_round, round, config.seed);
    std::vector<ClientResult> results(selected.size());
    parallel_for(selected.size(), workers, [&](std::size_t i) {
        const DeviceData* device = participant_data(state, selected[i]);
        if (device == nullptr) {
            return;
        }
        auto rng = client_stream(config.seed, round, selected[i]);
        LocalUpdate update = local_update(state.spec, state.params, *device, config.local_epochs,
                                          config.batch_size, config.client_lr, rng);
        results[i] = {true, std::move(update.params), client_weight(config, update.num_samples), update.flops};
    });
    Collected c = collect(results, selected);

    RoundResult out;
    out.params = weighted_average(c.vecs, c.weights);
    out.log = make_log(state, config, round, c);
    out.log.client_dispersion = mean_pairwise_distance(c.vecs);
    out.log.train_loss = participant_loss(state, out.params, c.ids, workers);
    return out;
}

RoundResult minibatch_sgd_round(const TrainingState& state, const FedConfig& config, std::size_t round,
                                unsigned workers)
{
    require_state(state);
    const auto selected = select_clients(*state.train, config.clients_per_round, round, config.seed);
    std::vector<ClientResult> results(selected.size());
    parallel_for(selected.size(), workers, [&](std::size_t i) {
        const DeviceData* device = participant_data(state, selected[i]);
        if (device == nullptr) {
            return;
        }
        const std::size_t n = device->size();
        const auto wanted = static_cast<std::size_t>(std::ceil(config.data_fraction * static_cast<double>(n) - 1e-9));
        const std::size_t used = std::clamp<std::size_t>(wanted, 1, n);

        auto rng = client_stream(config.seed, round, selected[i]);
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        for (std::size_t k = 0; k < used; ++k) {
            std::swap(rows[k], rows[k + rng.below(n - k)]);
        }
        rows.resize(used);

        std::vector<double> features;
        std::vector<std::int32_t> labels;
        gather_rows(*device, state.spec.feature_dim, rows, features, labels);
        GradResult g = gradient(state.spec, state.params, BatchView{features, labels, state.spec.feature_dim});
        results[i] = {true, std::move(g.grad), client_weight(config, used), g.flops};
    });
    Collected c = collect(results, selected);

    RoundResult out;
    out.params = state.params;
    const ParamBlock mean_grad = weighted_average(c.vecs, c.weights);
    sgd_step(out.params, mean_grad, config.server_lr);
    out.log = make_log(state, config, round, c);
    out.log.train_loss = participant_loss(state, out.params, c.ids, workers);
    return out;
}

double reptile_meta_lr(const FedConfig& config, std::size_t round)
{
    if (config.rounds <= 1) {
        return config.meta_lr_start;
    }
    const double progress = static_cast<double>(round) / static_cast<double>(config.rounds - 1);
    return config.meta_lr_start + (config.meta_lr_end - config.meta_lr_start) * progress;
}

RoundResult reptile_round(const TrainingState& state, const FedConfig& config, std::size_t round, unsigned workers)
{
    require_state(state);
    const auto selected = select_clients(*state.train, config.clients_per_round, round, config.seed);
    std::vector<ClientResult> results(selected.size());
    parallel_for(selected.size(), workers, [&](std::size_t i) {
        const DeviceData* device = participant_data(state, selected[i]);
        if (device == nullptr) {
            return;
        }
        auto rng = client_stream(config.seed, round, selected[i]);
        ParamBlock adapted = state.params;
        const std::uint64_t flops = run_sgd_steps(state.spec, adapted, *device, config.inner_steps,
                                                  config.inner_batch, config.client_lr, rng);
        results[i] = {true, std::move(adapted), 1.0, flops};
    });
    Collected c = collect(results, selected);

    // theta + alpha * mean_k(theta_k - theta)
    std::vector<ParamBlock> deltas = c.vecs;
    for (auto& delta : deltas) {
        kernels::axpy(-1.0, state.params, delta);
    }
    const ParamBlock mean_delta = weighted_average(deltas, c.weights);

    RoundResult out;
    out.params = state.params;
    kernels::axpy(reptile_meta_lr(config, round), mean_delta, out.params);
    out.log = make_log(state, config, round, c);
    out.log.client_dispersion = mean_pairwise_distance(c.vecs);
    out.log.train_loss = participant_loss(state, out.params, c.ids, workers);
    return out;
}

std::map<std::string, LocalModel> train_local(const FederatedDataset& train, const FederatedDataset& val,
                                              const ModelSpec& spec, std::span<const double> initial,
                                              std::vector<double> lr_grid, std::size_t epochs,
                                              std::size_t batch_size, std::uint64_t seed, unsigned workers)
{
    if (lr_grid.empty()) {
        throw ConfigError("local.lr_grid must not be empty");
    }
    for (double lr : lr_grid) {
        if (!(lr > 0.0) || !std::isfinite(lr)) {
            throw ConfigError("local.lr_grid entries must be positive");
        }
    }
    std::sort(lr_grid.begin(), lr_grid.end());
    lr_grid.erase(std::unique(lr_grid.begin(), lr_grid.end()), lr_grid.end());

    const auto& devices = train.devices();
    std::vector<LocalModel> models(devices.size());
    parallel_for(devices.size(), workers, [&](std::size_t i) {
        const DeviceData& device = devices[i];
        const DeviceData* holdout = val.find(device.id);
        if (holdout == nullptr) {
            spdlog::warn("device '{}' has no validation data; selecting its learning rate on training accuracy",
                         device.id);
            holdout = &device;
        }
        const BatchView selection = holdout->view(spec.feature_dim);

        LocalModel best;
        bool have_best = false;
        std::uint64_t flops = 0;
        for (double lr : lr_grid) {
            auto rng = RandomStream::derive(seed, StreamTag::local, {hash_key(device.id)});
            try {
                LocalUpdate update = local_update(spec, initial, device, epochs, batch_size, lr, rng);
                flops += update.flops;
                const double acc = accuracy_top1(spec, update.params, selection);
                if (!have_best || acc > best.selection_accuracy) {
                    best = LocalModel{std::move(update.params), lr, acc, 0};
                    have_best = true;
                }
            } catch (const NumericError&) {
                spdlog::debug("device '{}': learning rate {} diverged", device.id, lr);
            }
        }
        if (!have_best) {
            spdlog::warn("device '{}': every learning rate diverged; keeping the initial model", device.id);
            best = LocalModel{ParamBlock(initial.begin(), initial.end()), lr_grid.front(),
                              accuracy_top1(spec, initial, selection), 0};
        }
        best.flops = flops;
        models[i] = std::move(best);
    });

    std::map<std::string, LocalModel> out;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        out.emplace(devices[i].id, std::move(models[i]));
    }
    return out;
}

GlobalIidResult train_global_iid(const FederatedDataset& train, const ModelSpec& spec,
                                 std::span<const double> initial, std::size_t epochs, double lr,
                                 std::size_t batch_size, std::uint64_t seed)
{
    const FederatedDataset pooled = mix_iid(train, seed);
    const DeviceData& all = pooled.device(0);
    auto rng = RandomStream::derive(seed, StreamTag::local, {hash_key(all.id)});
    LocalUpdate update = local_update(spec, initial, all, epochs, batch_size, lr, rng);
    return {std::move(update.params), update.flops};
}

std::vector<DeviceAccuracy> evaluate_devices(const ModelSpec& spec, std::span<const double> params,
                                             const FederatedDataset& test, unsigned workers)
{
    const auto& devices = test.devices();
    std::vector<DeviceAccuracy> out(devices.size());
    parallel_for(devices.size(), workers, [&](std::size_t i) {
        const DeviceData& device = devices[i];
        out[i] = {device.id, accuracy_top1(spec, params, device.view(spec.feature_dim)), device.size()};
    });
    return out;
}

std::vector<DeviceAccuracy> evaluate_personalized(const ModelSpec& spec, std::span<const double> params,
                                                  const FederatedDataset& train, const FederatedDataset& test,
                                                  std::size_t finetune_steps, std::size_t finetune_batch,
                                                  double lr, std::uint64_t seed, unsigned workers)
{
    const auto& devices = test.devices();
    std::vector<DeviceAccuracy> out(devices.size());
    std::vector<char> keep(devices.size(), 0);
    parallel_for(devices.size(), workers, [&](std::size_t i) {
        const DeviceData& device = devices[i];
        if (device.size() == 0) {
            spdlog::warn("device '{}' has an empty test split; skipped", device.id);
            return;
        }
        ParamBlock tuned(params.begin(), params.end());
        if (finetune_steps > 0) {
            const DeviceData* local = train.find(device.id);
            if (local == nullptr || local->size() == 0) {
                spdlog::warn("device '{}' has no training data to fine-tune on; evaluating unadapted", device.id);
            } else {
                auto rng = RandomStream::derive(seed, StreamTag::finetune, {hash_key(device.id)});
                run_sgd_steps(spec, tuned, *local, finetune_steps, finetune_batch, lr, rng);
            }
        }
        out[i] = {device.id, accuracy_top1(spec, tuned, device.view(spec.feature_dim)), device.size()};
        keep[i] = 1;
    });
    std::vector<DeviceAccuracy> kept;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (keep[i]) {
            kept.push_back(std::move(out[i]));
        }
    }
    return kept;
}

}  // namespace fedsim

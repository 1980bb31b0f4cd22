#include <functional>

#include "fedsim/error.hpp"
#include "fedsim/runner.hpp"

namespace fedsim {

namespace {

// Single-cluster generator setup: 1000 devices, 60 features, 5 classes.
SynthConfig single_cluster_synth()
{
    SynthConfig s;
    s.num_tasks = 1000;
    s.cluster_probs = {1.0};
    s.latent_dim = 10;
    s.feature_dim = 60;
    s.num_classes = 5;
    s.seed = 1;
    return s;
}

// Small multi-cluster population for client-drift and personalization runs.
SynthConfig clustered_synth(std::size_t clusters, std::size_t devices)
{
    SynthConfig s;
    s.num_tasks = devices;
    s.cluster_probs.assign(clusters, 1.0 / static_cast<double>(clusters));
    s.latent_dim = 10;
    s.feature_dim = 20;
    s.num_classes = 5;
    s.seed = 1;
    return s;
}

ExperimentConfig base(const std::string& name, SynthConfig synth, Algorithm algorithm)
{
    ExperimentConfig c;
    c.name = name;
    c.seed = 1;
    c.dataset.synth = std::move(synth);
    c.algorithm = algorithm;
    c.model.kind = ModelKind::linear;
    c.model.init = InitScheme::Kind::zeros;
    c.eval.weighting = AccuracyWeighting::per_sample;
    return c;
}

// FedAvg baseline: 10 clients per round, 100 rounds, one local epoch, batch 5, lr 0.1.
ExperimentConfig table2_fedavg()
{
    auto c = base("synth-table2-fedavg", single_cluster_synth(), Algorithm::fedavg);
    c.fed.clients_per_round = 10;
    c.fed.rounds = 100;
    c.fed.local_epochs = 1;
    c.fed.batch_size = 5;
    c.fed.client_lr = 0.1;
    c.fed.eval_every = 10;
    return c;
}

// Purely local models, learning rate picked per device from 1e-3 .. 1e3.
ExperimentConfig table2_local()
{
    auto c = base("synth-table2-local", single_cluster_synth(), Algorithm::local);
    c.local.lr_grid = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    c.local.epochs = 10;
    c.local.batch_size = 5;
    return c;
}

ExperimentConfig table2_global_iid()
{
    auto c = base("synth-table2-global-iid", single_cluster_synth(), Algorithm::global_iid);
    c.global_iid.epochs = 3;
    c.global_iid.lr = 0.1;
    c.global_iid.batch_size = 5;
    return c;
}

// FedAvg on a three-cluster population with growing local work per round.
ExperimentConfig divergence(std::size_t epochs)
{
    auto c = base("synth-divergence-E" + std::to_string(epochs), clustered_synth(3, 100), Algorithm::fedavg);
    c.fed.clients_per_round = 10;
    c.fed.rounds = 20;
    c.fed.local_epochs = epochs;
    c.fed.batch_size = 10;
    c.fed.client_lr = 0.1;
    c.fed.eval_every = 5;
    return c;
}

// Evaluated every round so the first crossing of an accuracy threshold is exact.
ExperimentConfig budget_fedavg()
{
    auto c = table2_fedavg();
    c.name = "synth-budget-0.75";
    c.fed.eval_every = 1;
    return c;
}

ExperimentConfig budget_minibatch()
{
    auto c = base("synth-budget-minibatch", single_cluster_synth(), Algorithm::minibatch_sgd);
    c.fed.clients_per_round = 10;
    c.fed.rounds = 100;
    c.fed.data_fraction = 0.1;
    c.fed.server_lr = 0.1;
    c.fed.eval_every = 1;
    return c;
}

// Reptile with a meta step size decaying linearly from 2 to 0; evaluation
// fine-tunes each held-out device for 50 minibatches of 5.
ExperimentConfig reptile_two_cluster()
{
    auto c = base("synth-reptile-2cluster", clustered_synth(2, 200), Algorithm::reptile);
    c.fed.clients_per_round = 5;
    c.fed.rounds = 200;
    c.fed.client_lr = 0.01;
    c.fed.inner_steps = 5;
    c.fed.inner_batch = 10;
    c.fed.meta_lr_start = 2.0;
    c.fed.meta_lr_end = 0.0;
    c.fed.eval_every = 50;
    c.eval.holdout_fraction = 0.2;
    c.eval.finetune_steps = 50;
    c.eval.finetune_batch = 5;
    return c;
}

struct PresetEntry {
    PresetInfo info;
    std::function<ExperimentConfig()> make;
};

const std::vector<PresetEntry>& registry()
{
    static const std::vector<PresetEntry> entries = {
        {{"synth-table2-fedavg", "FedAvg on the single-cluster synthetic set (C=10, R=100, E=1, B=5, lr=0.1)"},
         table2_fedavg},
        {{"synth-table2-local", "per-device local models on the single-cluster synthetic set, lr grid 1e-3..1e3"},
         table2_local},
        {{"synth-table2-global-iid", "one model trained on the pooled, shuffled synthetic data"}, table2_global_iid},
        {{"synth-divergence-E1", "FedAvg client-drift sweep on 3 clusters, E=1"}, [] { return divergence(1); }},
        {{"synth-divergence-E4", "FedAvg client-drift sweep on 3 clusters, E=4"}, [] { return divergence(4); }},
        {{"synth-divergence-E16", "FedAvg client-drift sweep on 3 clusters, E=16"}, [] { return divergence(16); }},
        {{"synth-divergence-E64", "FedAvg client-drift sweep on 3 clusters, E=64"}, [] { return divergence(64); }},
        {{"synth-budget-0.75", "FedAvg evaluated every round, for the cost-to-0.75-accuracy report"},
         budget_fedavg},
        {{"synth-budget-minibatch", "minibatch SGD (10% of each client's data) evaluated every round"},
         budget_minibatch},
        {{"synth-reptile-2cluster", "Reptile on 2 clusters, meta lr 2 -> 0, 50-step fine-tuned evaluation"},
         reptile_two_cluster},
    };
    return entries;
}

}  // namespace

std::vector<PresetInfo> list_presets()
{
    std::vector<PresetInfo> out;
    for (const auto& e : registry()) {
        out.push_back(e.info);
    }
    return out;
}

ExperimentConfig preset_config(const std::string& name)
{
    for (const auto& e : registry()) {
        if (e.info.name == name) {
            return e.make();
        }
    }
    throw ConfigError("unknown preset '" + name + "' (see `fedsim presets`)");
}

}  // namespace fedsim

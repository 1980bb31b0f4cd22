#include "fedsim/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "fedsim/error.hpp"
#include "fedsim/kernels.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

std::vector<std::string> SynthConfig::violations() const
{
    std::vector<std::string> out;
    if (num_tasks < 1) {
        out.emplace_back("num_tasks: must be at least 1");
    }
    if (cluster_probs.empty()) {
        out.emplace_back("cluster_probs: must hold at least one probability");
    } else {
        double total = 0.0;
        bool positive = true;
        for (double p : cluster_probs) {
            positive = positive && p > 0.0 && std::isfinite(p);
            total += p;
        }
        if (!positive) {
            out.emplace_back("cluster_probs: every probability must be positive");
        } else if (std::abs(total - 1.0) > 1e-9) {
            out.emplace_back("cluster_probs: probabilities must sum to 1 (got " + std::to_string(total) + ")");
        }
    }
    if (latent_dim < 1) {
        out.emplace_back("latent_dim: must be positive");
    }
    if (feature_dim < 1) {
        out.emplace_back("feature_dim: must be positive");
    }
    if (num_classes < 2) {
        out.emplace_back("num_classes: must be at least 2");
    }
    if (!(logit_noise_std >= 0.0) || !std::isfinite(logit_noise_std)) {
        out.emplace_back("logit_noise_std: must be finite and nonnegative");
    }
    if (!std::isfinite(lognormal_mu)) {
        out.emplace_back("lognormal_mu: must be finite");
    }
    if (!(lognormal_sigma >= 0.0) || !std::isfinite(lognormal_sigma)) {
        out.emplace_back("lognormal_sigma: must be finite and nonnegative");
    }
    if (sample_offset < 1) {
        out.emplace_back("sample_offset: must be at least 1");
    }
    if (sample_cap < sample_offset) {
        out.emplace_back("sample_cap: must be at least sample_offset");
    }
    return out;
}

void SynthConfig::validate() const
{
    const auto problems = violations();
    if (!problems.empty()) {
        std::string message = "invalid synthetic config: " + problems.front();
        for (std::size_t i = 1; i < problems.size(); ++i) {
            message += "; " + problems[i];
        }
        throw ConfigError(message);
    }
}

PopulationModel build_population(const SynthConfig& config, RandomStream& rng)
{
    config.validate();
    PopulationModel pop;
    pop.latent_dim = config.latent_dim;
    pop.feature_dim = config.feature_dim;
    pop.num_classes = config.num_classes;

    const std::size_t k = config.num_clusters();
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> hypermean(config.latent_dim);
        for (double& b : hypermean) {
            b = rng.normal();
        }
        std::vector<double> mean(config.latent_dim);
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] = rng.normal(hypermean[i], 1.0);
        }
        pop.cluster_hypermeans.push_back(std::move(hypermean));
        pop.cluster_means.push_back(std::move(mean));
    }

    pop.projection.resize(config.num_classes * (config.feature_dim + 1) * config.latent_dim);
    for (double& q : pop.projection) {
        q = rng.normal();
    }

    pop.covariance_diag.resize(config.feature_dim);
    for (std::size_t i = 0; i < config.feature_dim; ++i) {
        pop.covariance_diag[i] = std::pow(static_cast<double>(i + 1), -1.2);
    }
    return pop;
}

std::size_t sample_count_from_draw(double draw, std::int64_t offset, std::int64_t cap)
{
    // Compare in floating point first: exp() of a large normal overflows any
    // integer type long before it reaches the cap.
    const double floored = std::floor(std::max(draw, 0.0));
    if (!(floored + static_cast<double>(offset) < static_cast<double>(cap))) {
        return static_cast<std::size_t>(cap);
    }
    return static_cast<std::size_t>(static_cast<std::int64_t>(floored) + offset);
}

std::int32_t label_sample(std::span<const double> weights, std::size_t num_classes, std::span<const double> x,
                          double noise_std, RandomStream& rng)
{
    const std::size_t cols = x.size() + 1;
    if (num_classes == 0 || weights.size() != num_classes * cols) {
        throw ShapeError("label_sample: weights hold " + std::to_string(weights.size()) + " entries, expected " +
                         std::to_string(num_classes) + " x " + std::to_string(cols));
    }
    // The sigmoid is strictly increasing, so the argmax is taken over the noisy
    // logits themselves. Evaluating it in double would round every logit above
    // ~37 to 1.0 and turn those classes into ties.
    std::int32_t best = 0;
    double best_logit = 0.0;
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
        const auto row = weights.subspan(cls * cols, cols);
        double logit = kernels::dot(row.first(x.size()), x) + row[x.size()];
        if (noise_std > 0.0) {
            logit += noise_std * rng.normal();
        }
        if (cls == 0 || logit > best_logit) {
            best_logit = logit;
            best = static_cast<std::int32_t>(cls);
        }
    }
    return best;
}

TaskData sample_task(const PopulationModel& pop, const SynthConfig& config, std::size_t task_id,
                     RandomStream& rng)
{
    const std::size_t s = pop.latent_dim;
    const std::size_t d = pop.feature_dim;
    const std::size_t c = pop.num_classes;

    TaskData task;
    task.task_id = task_id;
    task.cluster_index = config.num_clusters() == 1 ? 0 : rng.categorical(config.cluster_probs);

    const auto& mean = pop.cluster_means.at(task.cluster_index);
    task.latent.resize(s);
    for (std::size_t i = 0; i < s; ++i) {
        task.latent[i] = rng.normal(mean[i], 1.0);
    }

    // W = Q u, contracting the latent axis.
    task.weights.resize(c * (d + 1));
    const std::span<const double> projection(pop.projection);
    for (std::size_t row = 0; row < c * (d + 1); ++row) {
        task.weights[row] = kernels::dot(projection.subspan(row * s, s), task.latent);
    }

    const double draw = rng.lognormal(config.lognormal_mu, config.lognormal_sigma);
    task.num_samples = sample_count_from_draw(draw, config.sample_offset, config.sample_cap);

    task.center_hypermean.resize(d);
    for (double& value : task.center_hypermean) {
        value = rng.normal();
    }
    task.feature_center.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        task.feature_center[i] = rng.normal(task.center_hypermean[i], 1.0);
    }

    std::vector<double> stddev(d);
    for (std::size_t i = 0; i < d; ++i) {
        stddev[i] = std::sqrt(pop.covariance_diag[i]);
    }

    task.features.resize(task.num_samples * d);
    task.labels.resize(task.num_samples);
    for (std::size_t n = 0; n < task.num_samples; ++n) {
        std::span<double> x(task.features.data() + n * d, d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = rng.normal(task.feature_center[i], stddev[i]);
        }
        task.labels[n] = label_sample(task.weights, c, x, config.logit_noise_std, rng);
    }
    return task;
}

namespace {

std::string task_device_id(std::size_t task_id)
{
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "f_%05zu", task_id);
    return buffer;
}

}  // namespace

FederatedDataset generate_synthetic(const SynthConfig& config, unsigned workers)
{
    config.validate();
    auto pop_stream = RandomStream::derive(config.seed, StreamTag::population);
    const PopulationModel pop = build_population(config, pop_stream);

    std::vector<TaskData> tasks(config.num_tasks);
    parallel_for(config.num_tasks, workers, [&](std::size_t t) {
        auto stream = RandomStream::derive(config.seed, StreamTag::task, {t});
        tasks[t] = sample_task(pop, config, t, stream);
    });

    FederatedDataset ds(config.feature_dim, config.num_classes);
    for (auto& task : tasks) {
        DeviceData device;
        device.id = task_device_id(task.task_id);
        device.features = std::move(task.features);
        device.labels = std::move(task.labels);
        ds.set_group(device.id, "cluster_" + std::to_string(task.cluster_index));
        ds.add_device(std::move(device));
    }
    return ds;
}

}  // namespace fedsim

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

/// Parameters of the clustered synthetic task generator.
struct SynthConfig {
    std::size_t num_tasks = 1000;
    std::vector<double> cluster_probs{1.0};
    std::size_t latent_dim = 10;
    std::size_t feature_dim = 60;
    std::size_t num_classes = 5;
    double logit_noise_std = 0.31622776601683794;  // sqrt(0.1)
    double lognormal_mu = 3.0;
    double lognormal_sigma = 2.0;
    std::int64_t sample_offset = 5;
    std::int64_t sample_cap = 1000;
    std::uint64_t seed = 0;

    std::size_t num_clusters() const { return cluster_probs.size(); }
    /// One "field: problem" entry per violated constraint.
    std::vector<std::string> violations() const;
    /// Throws ConfigError listing every violation.
    void validate() const;
};

/// Population-level latents shared by every task.
struct PopulationModel {
    std::size_t latent_dim = 0;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::vector<double>> cluster_means;       // k vectors of latent_dim
    std::vector<std::vector<double>> cluster_hypermeans;  // k vectors of latent_dim
    // Projection tensor, shape num_classes x (feature_dim + 1) x latent_dim,
    // stored with the latent index fastest.
    std::vector<double> projection;
    std::vector<double> covariance_diag;  // entry i (0-based) is (i + 1)^-1.2

    double projection_at(std::size_t cls, std::size_t col, std::size_t latent) const
    {
        return projection[(cls * (feature_dim + 1) + col) * latent_dim + latent];
    }
};

struct TaskData {
    std::size_t task_id = 0;
    std::size_t cluster_index = 0;
    std::vector<double> latent;            // u_t
    std::vector<double> weights;           // num_classes x (feature_dim + 1), row-major, bias last
    std::vector<double> feature_center;    // v_t
    std::vector<double> center_hypermean;  // C_t
    std::size_t num_samples = 0;
    std::vector<double> features;          // num_samples x feature_dim
    std::vector<std::int32_t> labels;
};

PopulationModel build_population(const SynthConfig& config, RandomStream& rng);

/// Number of samples for a raw log-normal draw: floor, add the offset, cap.
std::size_t sample_count_from_draw(double draw, std::int64_t offset, std::int64_t cap);

TaskData sample_task(const PopulationModel& population, const SynthConfig& config, std::size_t task_id,
                     RandomStream& rng);

/// argmax(sigmoid(W [x; 1] + noise)) with noise ~ N(0, noise_std^2 I) in R^c.
/// Ties go to the lowest class index.
std::int32_t label_sample(std::span<const double> weights, std::size_t num_classes, std::span<const double> x,
                          double noise_std, RandomStream& rng);

/// Full dataset: device ids "f_00000", "f_00001", ...; each device's
/// hierarchy group is its cluster ("cluster_<j>"). Tasks are sampled on
/// `workers` threads from per-task streams, so the output does not depend
/// on the worker count.
FederatedDataset generate_synthetic(const SynthConfig& config, unsigned workers = 1);

}  // namespace fedsim

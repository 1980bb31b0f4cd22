#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

struct Sample {
    std::vector<double> features;
    std::int32_t label = 0;

    bool operator==(const Sample&) const = default;
};

/// Non-owning row-major view over m samples of dimension `dim`.
struct BatchView {
    std::span<const double> features;  // size() * dim values
    std::span<const std::int32_t> labels;
    std::size_t dim = 0;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return features.subspan(i * dim, dim); }
};

/// One device's samples, stored as a dense row-major feature block.
struct DeviceData {
    std::string id;
    std::vector<double> features;
    std::vector<std::int32_t> labels;

    std::size_t size() const { return labels.size(); }
    BatchView view(std::size_t dim) const { return {features, labels, dim}; }
    Sample sample(std::size_t i, std::size_t dim) const;
    void append(std::span<const double> x, std::int32_t y);

    bool operator==(const DeviceData&) const = default;
};

/// Copy the rows named by `indices` out of `source` into `features`/`labels`,
/// replacing their contents.
void gather_rows(const DeviceData& source, std::size_t dim, std::span<const std::size_t> indices,
                 std::vector<double>& features, std::vector<std::int32_t>& labels);

/// Keyed federated dataset. Devices are kept sorted by id, which is the
/// canonical device order everywhere (selection output, aggregation order,
/// serialization). No device is empty.
class FederatedDataset {
public:
    FederatedDataset() = default;
    FederatedDataset(std::size_t feature_dim, std::size_t num_classes);

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t num_devices() const { return devices_.size(); }
    std::size_t total_samples() const;
    bool empty() const { return devices_.empty(); }

    const std::vector<DeviceData>& devices() const { return devices_; }
    const DeviceData& device(std::size_t index) const { return devices_.at(index); }
    const DeviceData* find(const std::string& id) const;

    /// Insert a device; validates shape and labels, rejects empty devices and
    /// duplicate ids. Throws FormatError.
    void add_device(DeviceData device);

    const std::map<std::string, std::string>& hierarchy() const { return hierarchy_; }
    void set_group(const std::string& device_id, std::string group);
    std::optional<std::string> group_of(const std::string& device_id) const;

    bool operator==(const FederatedDataset&) const = default;

private:
    std::size_t feature_dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<DeviceData> devices_;
    std::map<std::string, std::string> hierarchy_;
};

struct DatasetStats {
    std::size_t num_devices = 0;
    std::size_t total_samples = 0;
    double mean_samples_per_device = 0.0;
    double stdev_samples_per_device = 0.0;  // population stdev
};

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct SplitResult {
    FederatedDataset train;
    FederatedDataset val;
    FederatedDataset test;
};

/// Per-device split sizes: floor for train and val, remainder to test.
struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};
SplitCounts split_counts(std::size_t n, const SplitFractions& fractions);

// File format (UTF-8 JSON, LEAF layout):
//   {"users": [...], "num_samples": [...], "feature_dim": d, "num_classes": c,
//    "hierarchy": {user: group, ...},            (optional)
//    "user_data": {user: {"x": [[...], ...], "y": [...]}, ...}}
void save_dataset(const FederatedDataset& ds, const std::filesystem::path& path);
FederatedDataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const FederatedDataset& ds);
FederatedDataset parse_dataset(const std::string& text);

FederatedDataset filter_min_samples(const FederatedDataset& ds, std::size_t min_samples);
SplitResult split_train_val_test(const FederatedDataset& ds, const SplitFractions& fractions,
                                 std::uint64_t seed);
FederatedDataset subsample_devices(const FederatedDataset& ds, std::size_t count, std::uint64_t seed);
FederatedDataset subsample_devices_fraction(const FederatedDataset& ds, double fraction,
                                            std::uint64_t seed);

inline constexpr const char* kIidDeviceId = "iid_all";
FederatedDataset mix_iid(const FederatedDataset& ds, std::uint64_t seed);

DatasetStats dataset_stats(const FederatedDataset& ds);
/// Same statistics from raw per-device counts.
DatasetStats stats_from_counts(std::span<const std::size_t> counts);

}  // namespace fedsim

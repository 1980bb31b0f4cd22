#include "fedsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fedsim/error.hpp"
#include "fedsim/random.hpp"

namespace fedsim {

using ordered_json = nlohmann::ordered_json;

Sample DeviceData::sample(std::size_t i, std::size_t dim) const
{
    const auto row = std::span<const double>(features).subspan(i * dim, dim);
    return Sample{{row.begin(), row.end()}, labels.at(i)};
}

void DeviceData::append(std::span<const double> x, std::int32_t y)
{
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
}

void gather_rows(const DeviceData& source, std::size_t dim, std::span<const std::size_t> indices,
                 std::vector<double>& features, std::vector<std::int32_t>& labels)
{
    features.resize(indices.size() * dim);
    labels.resize(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t src = indices[k];
        std::copy_n(source.features.begin() + static_cast<std::ptrdiff_t>(src * dim), dim,
                    features.begin() + static_cast<std::ptrdiff_t>(k * dim));
        labels[k] = source.labels[src];
    }
}

FederatedDataset::FederatedDataset(std::size_t feature_dim, std::size_t num_classes)
    : feature_dim_(feature_dim), num_classes_(num_classes)
{
}

std::size_t FederatedDataset::total_samples() const
{
    std::size_t total = 0;
    for (const auto& d : devices_) {
        total += d.size();
    }
    return total;
}

const DeviceData* FederatedDataset::find(const std::string& id) const
{
    auto it = std::lower_bound(devices_.begin(), devices_.end(), id,
                               [](const DeviceData& d, const std::string& key) { return d.id < key; });
    if (it == devices_.end() || it->id != id) {
        return nullptr;
    }
    return &*it;
}

void FederatedDataset::add_device(DeviceData device)
{
    const std::string& id = device.id;
    if (device.labels.empty()) {
        throw FormatError("device '" + id + "' has no samples");
    }
    if (device.features.size() != device.labels.size() * feature_dim_) {
        throw FormatError("device '" + id + "': feature block does not match feature_dim " +
                          std::to_string(feature_dim_));
    }
    for (std::int32_t y : device.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes_) {
            throw FormatError("device '" + id + "': label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes_) + ")");
        }
    }
    auto it = std::lower_bound(devices_.begin(), devices_.end(), id,
                               [](const DeviceData& d, const std::string& key) { return d.id < key; });
    if (it != devices_.end() && it->id == id) {
        throw FormatError("duplicate device '" + id + "'");
    }
    devices_.insert(it, std::move(device));
}

void FederatedDataset::set_group(const std::string& device_id, std::string group)
{
    hierarchy_[device_id] = std::move(group);
}

std::optional<std::string> FederatedDataset::group_of(const std::string& device_id) const
{
    auto it = hierarchy_.find(device_id);
    if (it == hierarchy_.end()) {
        return std::nullopt;
    }
    return it->second;
}

namespace {

// Carries the hierarchy entries of devices present in `target`.
void copy_groups(const FederatedDataset& source, FederatedDataset& target)
{
    for (const auto& [id, group] : source.hierarchy()) {
        if (target.find(id) != nullptr) {
            target.set_group(id, group);
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_dataset(const FederatedDataset& ds)
{
    ordered_json doc;
    ordered_json users = ordered_json::array();
    ordered_json counts = ordered_json::array();
    for (const auto& d : ds.devices()) {
        users.push_back(d.id);
        counts.push_back(d.size());
    }
    doc["users"] = std::move(users);
    doc["num_samples"] = std::move(counts);
    doc["feature_dim"] = ds.feature_dim();
    doc["num_classes"] = ds.num_classes();
    if (!ds.hierarchy().empty()) {
        ordered_json groups = ordered_json::object();
        for (const auto& [id, group] : ds.hierarchy()) {
            groups[id] = group;
        }
        doc["hierarchy"] = std::move(groups);
    }
    ordered_json user_data = ordered_json::object();
    const std::size_t dim = ds.feature_dim();
    for (const auto& d : ds.devices()) {
        ordered_json xs = ordered_json::array();
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto row = std::span<const double>(d.features).subspan(i * dim, dim);
            xs.push_back(ordered_json(std::vector<double>(row.begin(), row.end())));
        }
        user_data[d.id] = ordered_json{{"x", std::move(xs)}, {"y", d.labels}};
    }
    doc["user_data"] = std::move(user_data);
    return doc.dump();
}

namespace {

template <typename T>
T require_field(const ordered_json& doc, const char* key)
{
    if (!doc.contains(key)) {
        throw FormatError(std::string("missing key '") + key + "'");
    }
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

FederatedDataset parse_dataset(const std::string& text)
{
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed dataset JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw FormatError("dataset file must hold a JSON object");
    }

    const auto users = require_field<std::vector<std::string>>(doc, "users");
    const auto declared = require_field<std::vector<long long>>(doc, "num_samples");
    const auto feature_dim = require_field<long long>(doc, "feature_dim");
    const auto num_classes = require_field<long long>(doc, "num_classes");
    if (declared.size() != users.size()) {
        throw FormatError("'num_samples' has " + std::to_string(declared.size()) + " entries but 'users' has " +
                          std::to_string(users.size()));
    }
    if (feature_dim < 1 || num_classes < 1) {
        throw FormatError("feature_dim and num_classes must be positive");
    }
    if (!users.empty() && (!doc.contains("user_data") || !doc["user_data"].is_object())) {
        throw FormatError("missing object 'user_data'");
    }

    FederatedDataset ds(static_cast<std::size_t>(feature_dim), static_cast<std::size_t>(num_classes));
    const auto dim = static_cast<std::size_t>(feature_dim);
    for (std::size_t u = 0; u < users.size(); ++u) {
        const std::string& id = users[u];
        const auto& user_data = doc["user_data"];
        if (!user_data.contains(id)) {
            throw FormatError("device '" + id + "' listed in 'users' but absent from 'user_data'");
        }
        const auto& entry = user_data[id];
        if (!entry.is_object() || !entry.contains("x") || !entry.contains("y") || !entry["x"].is_array() ||
            !entry["y"].is_array()) {
            throw FormatError("device '" + id + "': expected {\"x\": [...], \"y\": [...]}");
        }
        const auto& xs = entry["x"];
        const auto& ys = entry["y"];
        if (declared[u] < 0 || xs.size() != static_cast<std::size_t>(declared[u]) ||
            ys.size() != static_cast<std::size_t>(declared[u])) {
            throw FormatError("device '" + id + "': declares " + std::to_string(declared[u]) +
                              " samples but holds " + std::to_string(xs.size()) + " x rows and " +
                              std::to_string(ys.size()) + " labels");
        }
        DeviceData device;
        device.id = id;
        device.features.reserve(xs.size() * dim);
        device.labels.reserve(ys.size());
        try {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const auto& row = xs[i];
                if (!row.is_array() || row.size() != dim) {
                    throw FormatError("device '" + id + "': sample " + std::to_string(i) + " has " +
                                      std::to_string(row.is_array() ? row.size() : 0) + " features, expected " +
                                      std::to_string(dim));
                }
                for (const auto& value : row) {
                    device.features.push_back(value.get<double>());
                }
                device.labels.push_back(ys[i].get<std::int32_t>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("device '" + id + "': " + e.what());
        }
        ds.add_device(std::move(device));
    }
    if (doc.contains("hierarchy")) {
        if (!doc["hierarchy"].is_object()) {
            throw FormatError("'hierarchy' must be an object");
        }
        for (const auto& [id, group] : doc["hierarchy"].items()) {
            if (!group.is_string()) {
                throw FormatError("hierarchy entry for '" + id + "' must be a string");
            }
            ds.set_group(id, group.get<std::string>());
        }
    }
    return ds;
}

void save_dataset(const FederatedDataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ArgumentError("cannot open '" + path.string() + "' for writing");
    }
    out << serialize_dataset(ds) << '\n';
    if (!out) {
        throw ArgumentError("failed writing '" + path.string() + "'");
    }
}

FederatedDataset load_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open dataset '" + path.string() + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_dataset(buffer.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Transformations

FederatedDataset filter_min_samples(const FederatedDataset& ds, std::size_t min_samples)
{
    if (min_samples < 1) {
        throw ArgumentError("min_samples must be at least 1");
    }
    FederatedDataset out(ds.feature_dim(), ds.num_classes());
    for (const auto& d : ds.devices()) {
        if (d.size() >= min_samples) {
            out.add_device(d);
        }
    }
    copy_groups(ds, out);
    if (out.empty() && !ds.empty()) {
        spdlog::warn("filter_min_samples({}) removed every device", min_samples);
    }
    return out;
}

SplitCounts split_counts(std::size_t n, const SplitFractions& fractions)
{
    // The epsilon absorbs representation error such as 0.6 * 5 = 2.9999...
    const auto take = [n](double fraction) {
        return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    };
    SplitCounts counts;
    counts.train = std::min(take(fractions.train), n);
    counts.val = std::min(take(fractions.val), n - counts.train);
    counts.test = n - counts.train - counts.val;
    return counts;
}

SplitResult split_train_val_test(const FederatedDataset& ds, const SplitFractions& fractions,
                                 std::uint64_t seed)
{
    if (!(fractions.train > 0.0) || !(fractions.val > 0.0) || !(fractions.test > 0.0) ||
        std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be positive and sum to 1");
    }
    const std::size_t dim = ds.feature_dim();
    SplitResult result{FederatedDataset(dim, ds.num_classes()), FederatedDataset(dim, ds.num_classes()),
                       FederatedDataset(dim, ds.num_classes())};
    for (const auto& d : ds.devices()) {
        if (d.size() < 3) {
            throw SplitError("device '" + d.id + "' has " + std::to_string(d.size()) +
                             " samples; splitting needs at least 3 (filter first)");
        }
        std::vector<std::size_t> order(d.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto stream = RandomStream::derive(seed, StreamTag::split, {hash_key(d.id)});
        stream.shuffle(std::span<std::size_t>(order));

        const SplitCounts counts = split_counts(d.size(), fractions);
        const auto part = [&](std::size_t begin, std::size_t count, FederatedDataset& target) {
            if (count == 0) {
                return;
            }
            DeviceData piece;
            piece.id = d.id;
            gather_rows(d, dim, std::span<const std::size_t>(order).subspan(begin, count), piece.features,
                        piece.labels);
            target.add_device(std::move(piece));
        };
        part(0, counts.train, result.train);
        part(counts.train, counts.val, result.val);
        part(counts.train + counts.val, counts.test, result.test);
    }
    copy_groups(ds, result.train);
    copy_groups(ds, result.val);
    copy_groups(ds, result.test);
    return result;
}

FederatedDataset subsample_devices(const FederatedDataset& ds, std::size_t count, std::uint64_t seed)
{
    if (count > ds.num_devices()) {
        throw ArgumentError("cannot subsample " + std::to_string(count) + " devices from " +
                            std::to_string(ds.num_devices()));
    }
    std::vector<std::size_t> indices(ds.num_devices());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    auto stream = RandomStream::derive(seed, StreamTag::subsample);
    // Partial Fisher–Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + stream.below(indices.size() - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(count);
    std::sort(indices.begin(), indices.end());

    FederatedDataset out(ds.feature_dim(), ds.num_classes());
    for (std::size_t index : indices) {
        out.add_device(ds.device(index));
    }
    copy_groups(ds, out);
    return out;
}

FederatedDataset subsample_devices_fraction(const FederatedDataset& ds, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ArgumentError("subsample fraction must lie in (0, 1]");
    }
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.num_devices())));
    return subsample_devices(ds, count, seed);
}

FederatedDataset mix_iid(const FederatedDataset& ds, std::uint64_t seed)
{
    if (ds.empty()) {
        throw ArgumentError("mix_iid needs a nonempty dataset");
    }
    const std::size_t dim = ds.feature_dim();
    DeviceData all;
    all.id = kIidDeviceId;
    all.features.reserve(ds.total_samples() * dim);
    all.labels.reserve(ds.total_samples());
    for (const auto& d : ds.devices()) {
        all.features.insert(all.features.end(), d.features.begin(), d.features.end());
        all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
    }
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto stream = RandomStream::derive(seed, StreamTag::mix);
    stream.shuffle(std::span<std::size_t>(order));

    DeviceData shuffled;
    shuffled.id = kIidDeviceId;
    gather_rows(all, dim, order, shuffled.features, shuffled.labels);

    FederatedDataset out(dim, ds.num_classes());
    out.add_device(std::move(shuffled));
    return out;
}

DatasetStats stats_from_counts(std::span<const std::size_t> counts)
{
    if (counts.empty()) {
        throw ArgumentError("statistics of an empty dataset are undefined");
    }
    DatasetStats stats;
    stats.num_devices = counts.size();
    for (std::size_t c : counts) {
        stats.total_samples += c;
    }
    stats.mean_samples_per_device = static_cast<double>(stats.total_samples) / static_cast<double>(counts.size());
    double sum_sq = 0.0;
    for (std::size_t c : counts) {
        const double diff = static_cast<double>(c) - stats.mean_samples_per_device;
        sum_sq += diff * diff;
    }
    stats.stdev_samples_per_device = std::sqrt(sum_sq / static_cast<double>(counts.size()));
    return stats;
}

DatasetStats dataset_stats(const FederatedDataset& ds)
{
    std::vector<std::size_t> counts;
    counts.reserve(ds.num_devices());
    for (const auto& d : ds.devices()) {
        counts.push_back(d.size());
    }
    return stats_from_counts(counts);
}

}  // namespace fedsim

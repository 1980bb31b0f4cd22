#include "fedsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <type_traits>

#include "fedsim/error.hpp"

namespace fedsim {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::fedavg:
        return "fedavg";
    case Algorithm::minibatch_sgd:
        return "minibatch_sgd";
    case Algorithm::reptile:
        return "reptile";
    case Algorithm::local:
        return "local";
    case Algorithm::global_iid:
        return "global_iid";
    }
    return "fedavg";
}

Algorithm algorithm_from_string(const std::string& name)
{
    for (Algorithm a : {Algorithm::fedavg, Algorithm::minibatch_sgd, Algorithm::reptile, Algorithm::local,
                        Algorithm::global_iid}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw ConfigError("unknown algorithm '" + name +
                      "' (expected fedavg, minibatch_sgd, reptile, local or global_iid)");
}

namespace {

// Seeds are read through the std::size_t overload.
static_assert(std::is_same_v<std::uint64_t, std::size_t>, "64-bit size_t expected");

// Reads one JSON object section, collecting type errors and unknown keys.
class SectionReader {
public:
    SectionReader(const ordered_json& object, std::string prefix, std::vector<std::string>& errors)
        : object_(object), prefix_(std::move(prefix)), errors_(errors)
    {
    }

    bool has(const char* key)
    {
        seen_.insert(key);
        return object_.contains(key) && !object_.at(key).is_null();
    }

    void read(const char* key, std::size_t& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_number_unsigned()) {
            fail(key, "expected a nonnegative integer");
            return;
        }
        out = v.get<std::size_t>();
    }

    void read(const char* key, std::int64_t& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_number_integer()) {
            fail(key, "expected an integer");
            return;
        }
        out = v.get<std::int64_t>();
    }

    void read(const char* key, double& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_number()) {
            fail(key, "expected a number");
            return;
        }
        out = v.get<double>();
    }

    void read(const char* key, bool& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_boolean()) {
            fail(key, "expected true or false");
            return;
        }
        out = v.get<bool>();
    }

    void read(const char* key, std::string& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_string()) {
            fail(key, "expected a string");
            return;
        }
        out = v.get<std::string>();
    }

    void read(const char* key, std::vector<double>& out)
    {
        if (!has(key)) {
            return;
        }
        const auto& v = object_.at(key);
        if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const auto& e) { return e.is_number(); })) {
            fail(key, "expected an array of numbers");
            return;
        }
        out = v.get<std::vector<double>>();
    }

    template <typename T>
    void read_optional(const char* key, std::optional<T>& out)
    {
        if (!has(key)) {
            return;
        }
        T value{};
        read(key, value);
        out = value;
    }

    // Reads a string and maps it through `convert`, which throws ConfigError on bad names.
    template <typename T, typename Convert>
    void read_enum(const char* key, T& out, Convert convert)
    {
        std::string name;
        if (!has(key)) {
            return;
        }
        read(key, name);
        try {
            out = convert(name);
        } catch (const ConfigError& e) {
            fail(key, e.what());
        }
    }

    const ordered_json* section(const char* key)
    {
        if (!has(key)) {
            return nullptr;
        }
        const auto& v = object_.at(key);
        if (!v.is_object()) {
            fail(key, "expected an object");
            return nullptr;
        }
        return &v;
    }

    void fail(const std::string& key, const std::string& message)
    {
        errors_.push_back(prefix_ + key + ": " + message);
    }

    void finish()
    {
        for (const auto& [key, value] : object_.items()) {
            if (!seen_.contains(key)) {
                errors_.push_back(prefix_ + key + ": unknown key");
            }
        }
    }

    std::string prefix() const { return prefix_; }

private:
    const ordered_json& object_;
    std::string prefix_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

SynthConfig read_synth(const ordered_json& object, std::vector<std::string>& errors)
{
    SynthConfig s;
    SectionReader r(object, "dataset.synth.", errors);
    r.read("num_tasks", s.num_tasks);
    r.read("cluster_probs", s.cluster_probs);
    r.read("latent_dim", s.latent_dim);
    r.read("feature_dim", s.feature_dim);
    r.read("num_classes", s.num_classes);
    r.read("logit_noise_std", s.logit_noise_std);
    r.read("lognormal_mu", s.lognormal_mu);
    r.read("lognormal_sigma", s.lognormal_sigma);
    r.read("sample_offset", s.sample_offset);
    r.read("sample_cap", s.sample_cap);
    r.read("seed", s.seed);
    r.finish();
    return s;
}

InitScheme::Kind init_from_string(const std::string& name)
{
    if (name == "zeros") {
        return InitScheme::Kind::zeros;
    }
    if (name == "gaussian") {
        return InitScheme::Kind::gaussian;
    }
    throw ConfigError("unknown init '" + name + "' (expected zeros or gaussian)");
}

ClientWeighting client_weighting_from_string(const std::string& name)
{
    if (name == "samples") {
        return ClientWeighting::samples;
    }
    if (name == "uniform") {
        return ClientWeighting::uniform;
    }
    throw ConfigError("unknown client weighting '" + name + "' (expected samples or uniform)");
}

}  // namespace

ExperimentConfig config_from_json(const ordered_json& doc)
{
    if (!doc.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    std::vector<std::string> errors;
    ExperimentConfig c;
    SectionReader top(doc, "", errors);
    top.read("name", c.name);
    top.read("seed", c.seed);
    top.read_enum("algorithm", c.algorithm, algorithm_from_string);
    top.read("output", c.output);
    std::size_t workers = c.workers;
    top.read("workers", workers);
    c.workers = static_cast<unsigned>(workers);

    if (const auto* ds = top.section("dataset")) {
        SectionReader r(*ds, "dataset.", errors);
        r.read_optional("path", c.dataset.path);
        if (const auto* synth = r.section("synth")) {
            c.dataset.synth = read_synth(*synth, errors);
        }
        r.finish();
    }
    if (const auto* pre = top.section("preprocess")) {
        SectionReader r(*pre, "preprocess.", errors);
        r.read("min_samples", c.preprocess.min_samples);
        r.read_optional("subsample_count", c.preprocess.subsample_count);
        r.read_optional("subsample_fraction", c.preprocess.subsample_fraction);
        r.read("mix_iid", c.preprocess.mix_iid);
        std::vector<double> split{c.preprocess.split.train, c.preprocess.split.val, c.preprocess.split.test};
        r.read("split", split);
        if (split.size() == 3) {
            c.preprocess.split = {split[0], split[1], split[2]};
        } else {
            r.fail("split", "expected three fractions (train, val, test)");
        }
        r.finish();
    }
    if (const auto* model = top.section("model")) {
        SectionReader r(*model, "model.", errors);
        r.read_enum("kind", c.model.kind, model_kind_from_string);
        r.read("hidden_dim", c.model.hidden_dim);
        r.read_enum("init", c.model.init, init_from_string);
        r.read("init_std", c.model.init_std);
        r.finish();
    }
    if (const auto* fed = top.section("fed")) {
        SectionReader r(*fed, "fed.", errors);
        r.read("clients_per_round", c.fed.clients_per_round);
        r.read("local_epochs", c.fed.local_epochs);
        r.read("batch_size", c.fed.batch_size);
        r.read("client_lr", c.fed.client_lr);
        r.read("rounds", c.fed.rounds);
        r.read("eval_every", c.fed.eval_every);
        r.read_enum("weighting", c.fed.weighting, client_weighting_from_string);
        r.read("bytes_per_param", c.fed.bytes_per_param);
        r.read("data_fraction", c.fed.data_fraction);
        r.read("server_lr", c.fed.server_lr);
        r.read("meta_lr_start", c.fed.meta_lr_start);
        r.read("meta_lr_end", c.fed.meta_lr_end);
        r.read("inner_steps", c.fed.inner_steps);
        r.read("inner_batch", c.fed.inner_batch);
        r.finish();
    }
    if (const auto* local = top.section("local")) {
        SectionReader r(*local, "local.", errors);
        r.read("lr_grid", c.local.lr_grid);
        r.read("epochs", c.local.epochs);
        r.read("batch_size", c.local.batch_size);
        r.finish();
    }
    if (const auto* global = top.section("global_iid")) {
        SectionReader r(*global, "global_iid.", errors);
        r.read("epochs", c.global_iid.epochs);
        r.read("lr", c.global_iid.lr);
        r.read("batch_size", c.global_iid.batch_size);
        r.finish();
    }
    if (const auto* eval = top.section("eval")) {
        SectionReader r(*eval, "eval.", errors);
        r.read_enum("weighting", c.eval.weighting, weighting_from_string);
        r.read("device_fraction", c.eval.device_fraction);
        r.read("holdout_fraction", c.eval.holdout_fraction);
        r.read("finetune_steps", c.eval.finetune_steps);
        r.read("finetune_batch", c.eval.finetune_batch);
        r.read("finetune_lr", c.eval.finetune_lr);
        r.finish();
    }
    top.finish();
    c.fed.seed = c.seed;

    if (!errors.empty()) {
        std::string message = "invalid experiment config:";
        for (const auto& e : errors) {
            message += "\n  " + e;
        }
        throw ConfigError(message);
    }
    return c;
}

ExperimentConfig parse_config(const std::string& text)
{
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
    return config_from_json(doc);
}

ordered_json synth_config_to_json(const SynthConfig& s)
{
    ordered_json j;
    j["num_tasks"] = s.num_tasks;
    j["cluster_probs"] = s.cluster_probs;
    j["latent_dim"] = s.latent_dim;
    j["feature_dim"] = s.feature_dim;
    j["num_classes"] = s.num_classes;
    j["logit_noise_std"] = s.logit_noise_std;
    j["lognormal_mu"] = s.lognormal_mu;
    j["lognormal_sigma"] = s.lognormal_sigma;
    j["sample_offset"] = s.sample_offset;
    j["sample_cap"] = s.sample_cap;
    j["seed"] = s.seed;
    return j;
}

ordered_json config_to_json(const ExperimentConfig& c)
{
    ordered_json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["algorithm"] = to_string(c.algorithm);

    ordered_json ds = ordered_json::object();
    if (c.dataset.path) {
        ds["path"] = *c.dataset.path;
    }
    if (c.dataset.synth) {
        ds["synth"] = synth_config_to_json(*c.dataset.synth);
    }
    j["dataset"] = std::move(ds);

    ordered_json pre;
    pre["min_samples"] = c.preprocess.min_samples;
    if (c.preprocess.subsample_count) {
        pre["subsample_count"] = *c.preprocess.subsample_count;
    }
    if (c.preprocess.subsample_fraction) {
        pre["subsample_fraction"] = *c.preprocess.subsample_fraction;
    }
    pre["mix_iid"] = c.preprocess.mix_iid;
    pre["split"] = {c.preprocess.split.train, c.preprocess.split.val, c.preprocess.split.test};
    j["preprocess"] = std::move(pre);

    j["model"] = {{"kind", to_string(c.model.kind)},
                  {"hidden_dim", c.model.hidden_dim},
                  {"init", c.model.init == InitScheme::Kind::zeros ? "zeros" : "gaussian"},
                  {"init_std", c.model.init_std}};

    j["fed"] = {{"clients_per_round", c.fed.clients_per_round},
                {"local_epochs", c.fed.local_epochs},
                {"batch_size", c.fed.batch_size},
                {"client_lr", c.fed.client_lr},
                {"rounds", c.fed.rounds},
                {"eval_every", c.fed.eval_every},
                {"weighting", c.fed.weighting == ClientWeighting::samples ? "samples" : "uniform"},
                {"bytes_per_param", c.fed.bytes_per_param},
                {"data_fraction", c.fed.data_fraction},
                {"server_lr", c.fed.server_lr},
                {"meta_lr_start", c.fed.meta_lr_start},
                {"meta_lr_end", c.fed.meta_lr_end},
                {"inner_steps", c.fed.inner_steps},
                {"inner_batch", c.fed.inner_batch}};

    j["local"] = {{"lr_grid", c.local.lr_grid}, {"epochs", c.local.epochs}, {"batch_size", c.local.batch_size}};
    j["global_iid"] = {
        {"epochs", c.global_iid.epochs}, {"lr", c.global_iid.lr}, {"batch_size", c.global_iid.batch_size}};
    j["eval"] = {{"weighting", to_string(c.eval.weighting)},
                 {"device_fraction", c.eval.device_fraction},
                 {"holdout_fraction", c.eval.holdout_fraction},
                 {"finetune_steps", c.eval.finetune_steps},
                 {"finetune_batch", c.eval.finetune_batch},
                 {"finetune_lr", c.eval.finetune_lr}};
    return j;
}

std::vector<std::string> validate_config(const ExperimentConfig& c)
{
    std::vector<std::string> out;
    auto require = [&out](bool ok, std::string message) {
        if (!ok) {
            out.push_back(std::move(message));
        }
    };

    require(c.dataset.path.has_value() != c.dataset.synth.has_value(),
            "dataset: exactly one of 'path' or 'synth' must be given");
    if (c.dataset.synth) {
        for (const auto& v : c.dataset.synth->violations()) {
            out.push_back("dataset.synth." + v);
        }
    }

    const auto& split = c.preprocess.split;
    require(split.train > 0.0 && split.val > 0.0 && split.test > 0.0,
            "preprocess.split: every fraction must be positive");
    require(std::abs(split.train + split.val + split.test - 1.0) <= 1e-9,
            "preprocess.split: fractions must sum to 1 (got " + std::to_string(split.train + split.val + split.test) +
                ")");
    require(!(c.preprocess.subsample_count && c.preprocess.subsample_fraction),
            "preprocess: give at most one of subsample_count and subsample_fraction");
    if (c.preprocess.subsample_count) {
        require(*c.preprocess.subsample_count >= 1, "preprocess.subsample_count: must be at least 1");
    }
    if (c.preprocess.subsample_fraction) {
        const double f = *c.preprocess.subsample_fraction;
        require(f > 0.0 && f <= 1.0, "preprocess.subsample_fraction: must lie in (0, 1]");
    }

    if (c.model.kind == ModelKind::one_hidden) {
        require(c.model.hidden_dim >= 1, "model.hidden_dim: one_hidden needs at least one hidden unit");
    }
    require(c.model.init_std >= 0.0 && std::isfinite(c.model.init_std), "model.init_std: must be nonnegative");

    switch (c.algorithm) {
    case Algorithm::fedavg:
    case Algorithm::minibatch_sgd:
    case Algorithm::reptile:
        for (auto& v : c.fed.violations()) {
            out.push_back(std::move(v));
        }
        break;
    case Algorithm::local:
        require(!c.local.lr_grid.empty(), "local.lr_grid: must not be empty");
        require(std::all_of(c.local.lr_grid.begin(), c.local.lr_grid.end(),
                            [](double lr) { return lr > 0.0 && std::isfinite(lr); }),
                "local.lr_grid: every learning rate must be positive");
        require(c.local.epochs >= 1, "local.epochs: must be at least 1");
        require(c.local.batch_size >= 1, "local.batch_size: must be at least 1");
        break;
    case Algorithm::global_iid:
        require(c.global_iid.lr > 0.0 && std::isfinite(c.global_iid.lr), "global_iid.lr: must be positive");
        require(c.global_iid.batch_size >= 1, "global_iid.batch_size: must be at least 1");
        break;
    }

    require(c.eval.device_fraction > 0.0 && c.eval.device_fraction <= 1.0,
            "eval.device_fraction: must lie in (0, 1]");
    require(c.eval.holdout_fraction >= 0.0 && c.eval.holdout_fraction < 1.0,
            "eval.holdout_fraction: must lie in [0, 1)");
    require(c.eval.finetune_batch >= 1, "eval.finetune_batch: must be at least 1");
    require(c.eval.finetune_lr >= 0.0 && std::isfinite(c.eval.finetune_lr),
            "eval.finetune_lr: must be nonnegative");
    require(c.workers >= 1, "workers: must be at least 1");
    return out;
}

}  // namespace fedsim

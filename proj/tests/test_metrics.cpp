#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "fedsim/error.hpp"
#include "fedsim/metrics.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

std::vector<DeviceAccuracy> entries_from(const std::vector<double>& acc, const std::vector<std::size_t>& n)
{
    std::vector<DeviceAccuracy> out;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.push_back({"d" + std::to_string(i), acc[i], n[i]});
    }
    return out;
}

std::vector<double> percentiles(const AccuracySummary& s)
{
    return {s.p10, s.p25, s.p50, s.p75, s.p90};
}

const double kLevels[] = {10, 25, 50, 75, 90};

RoundLog eval_round(std::size_t r, double acc, std::uint64_t flops)
{
    RoundLog log;
    log.round = r;
    log.evaluated = true;
    log.eval = {{"a", acc, 10}};
    log.cumulative = {flops, flops * 2, flops * 3};
    return log;
}

}  // namespace

TEST_CASE("per-device percentiles of 0.1..1.0")
{
    std::vector<double> acc;
    for (int i = 1; i <= 10; ++i) {
        acc.push_back(i / 10.0);
    }
    const auto s = summarize_accuracy(entries_from(acc, std::vector<std::size_t>(10, 3)), AccuracyWeighting::per_device);
    CHECK(s.p50 == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(s.mean == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(s.n_devices == 10);
    CHECK(s.weighting == AccuracyWeighting::per_device);
}

TEST_CASE("single device and equal counts")
{
    const auto one = summarize_accuracy(entries_from({0.42}, {7}), AccuracyWeighting::per_sample);
    for (double v : percentiles(one)) {
        CHECK(v == 0.42);
    }
    CHECK(one.mean == 0.42);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> acc(1 + t % 13);
        for (auto& a : acc) {
            a = u(rng);
        }
        const std::size_t k = 1 + t % 4;
        const std::vector<std::size_t> n(acc.size(), k);
        const auto dev = summarize_accuracy(entries_from(acc, n), AccuracyWeighting::per_device);
        const auto smp = summarize_accuracy(entries_from(acc, n), AccuracyWeighting::per_sample);
        CHECK(std::abs(dev.mean - smp.mean) <= 1e-12);
        // Percentiles coincide for unit counts. For k > 1 the per-sample ones
        // are those of the k-fold replicated multiset, which differ under
        // (n - 1) interpolation.
        const auto a = percentiles(dev);
        const auto b = percentiles(smp);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (k == 1) {
                CHECK(std::abs(a[i] - b[i]) <= 1e-12);
            }
            CHECK(std::abs(b[i] - oracle::expanded_percentile(acc, n, kLevels[i])) <= 1e-12);
        }
    }
}

TEST_CASE("unweighted percentiles match sort-and-interpolate")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> len(1, 40);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> acc(len(rng));
        for (auto& a : acc) {
            a = t % 5 == 0 ? std::round(u(rng) * 4) / 4 : u(rng);
        }
        std::vector<std::size_t> n(acc.size());
        for (auto& k : n) {
            k = 1 + rng() % 50;
        }
        const auto s = percentiles(summarize_accuracy(entries_from(acc, n), AccuracyWeighting::per_device));
        for (std::size_t i = 0; i < 5; ++i) {
            REQUIRE(std::abs(s[i] - oracle::percentile(acc, kLevels[i])) <= 1e-12);
        }
    }
}

TEST_CASE("weighted percentiles equal percentiles of the expanded multiset")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Every weight vector with n <= 5 and weights in 1..5.
    for (std::size_t n = 1; n <= 5; ++n) {
        std::vector<std::size_t> w(n, 1);
        while (true) {
            std::vector<double> acc(n);
            for (auto& a : acc) {
                a = std::round(u(rng) * 8) / 8;  // ties on purpose
            }
            const auto s = summarize_accuracy(entries_from(acc, w), AccuracyWeighting::per_sample);
            const auto got = percentiles(s);
            for (std::size_t i = 0; i < 5; ++i) {
                REQUIRE(std::abs(got[i] - oracle::expanded_percentile(acc, w, kLevels[i])) <= 1e-12);
            }
            long double num = 0.0L;
            std::size_t den = 0;
            for (std::size_t i = 0; i < n; ++i) {
                num += acc[i] * static_cast<long double>(w[i]);
                den += w[i];
            }
            REQUIRE(std::abs(s.mean - static_cast<double>(num / den)) <= 1e-12);

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
}

TEST_CASE("raising every accuracy by delta moves summaries by at most delta")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 300; ++t) {
        const std::size_t len = 1 + t % 17;
        std::vector<double> acc(len);
        std::vector<std::size_t> n(len);
        for (std::size_t i = 0; i < len; ++i) {
            acc[i] = u(rng);
            n[i] = 1 + rng() % 9;
        }
        const double delta = u(rng) * 0.3;
        auto raised = acc;
        for (auto& a : raised) {
            a = std::min(1.0, a + delta);
        }
        for (auto w : {AccuracyWeighting::per_device, AccuracyWeighting::per_sample}) {
            const auto before = summarize_accuracy(entries_from(acc, n), w);
            const auto after = summarize_accuracy(entries_from(raised, n), w);
            auto b = percentiles(before);
            auto a = percentiles(after);
            b.push_back(before.mean);
            a.push_back(after.mean);
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i] - b[i] >= -1e-12);
                CHECK(a[i] - b[i] <= delta + 1e-12);
            }
            CHECK(after.p10 <= after.p25);
            CHECK(after.p25 <= after.p50);
            CHECK(after.p50 <= after.p75);
            CHECK(after.p75 <= after.p90);
        }
    }
}

TEST_CASE("summaries reject bad input")
{
    CHECK_THROWS_AS(summarize_accuracy({}, AccuracyWeighting::per_device), ArgumentError);
    CHECK_THROWS_AS(summarize_accuracy(entries_from({1.2}, {3}), AccuracyWeighting::per_device), ArgumentError);
    CHECK_THROWS_AS(summarize_accuracy(entries_from({-0.1}, {3}), AccuracyWeighting::per_device), ArgumentError);
    CHECK_THROWS_AS(summarize_accuracy(entries_from({0.5}, {0}), AccuracyWeighting::per_sample), ArgumentError);
    CHECK(weighting_from_string("per_sample") == AccuracyWeighting::per_sample);
    CHECK_THROWS_AS(weighting_from_string("per_user"), ConfigError);
}

TEST_CASE("stratified accuracy")
{
    const auto e = entries_from({0.1, 0.2, 0.3, 0.8, 0.9, 0.5}, {1, 2, 3, 4, 5, 6});
    std::map<std::string, std::string> one;
    for (const auto& d : e) {
        one[d.device_id] = "all";
    }
    const auto single = stratified_accuracy(e, one, AccuracyWeighting::per_sample);
    REQUIRE(single.size() == 1);
    const auto global = summarize_accuracy(e, AccuracyWeighting::per_sample);
    CHECK(single.at("all").mean == global.mean);
    CHECK(percentiles(single.at("all")) == percentiles(global));

    const std::map<std::string, std::string> two{{"d0", "low"}, {"d1", "low"}, {"d2", "low"},
                                                 {"d3", "high"}, {"d4", "high"}};
    const auto groups = stratified_accuracy(e, two, AccuracyWeighting::per_device);
    REQUIRE(groups.size() == 3);
    CHECK(groups.at("low").mean < groups.at("high").mean);
    std::size_t total = 0;
    for (const auto& [g, s] : groups) {
        total += s.n_devices;
    }
    CHECK(total == e.size());
    CHECK(groups.at("ungrouped").n_devices == 1);
}

TEST_CASE("systems budget")
{
    std::vector<RoundLog> logs;
    logs.push_back(eval_round(0, 0.5, 10));
    RoundLog skipped;
    skipped.round = 1;
    skipped.cumulative = {15, 30, 45};
    logs.push_back(skipped);
    logs.push_back(eval_round(2, 0.7, 20));
    logs.push_back(eval_round(3, 0.8, 30));

    const auto b = systems_budget(logs, 0.75, AccuracyWeighting::per_sample);
    CHECK(b.reached);
    CHECK(b.round_reached == std::optional<std::size_t>(3));
    CHECK(b.total_flops == 30);
    CHECK(b.total_bytes_up == 60);
    CHECK(b.total_bytes_down == 90);

    CHECK(systems_budget(logs, 0.0, AccuracyWeighting::per_sample).round_reached == std::optional<std::size_t>(0));

    const auto never = systems_budget(logs, 1.1, AccuracyWeighting::per_sample);
    CHECK_FALSE(never.reached);
    CHECK_FALSE(never.round_reached.has_value());
    CHECK(never.total_flops == 30);

    std::size_t previous = 100;
    for (double th = 0.8; th >= 0.0; th -= 0.05) {
        const auto r = systems_budget(logs, th, AccuracyWeighting::per_device);
        REQUIRE(r.reached);
        CHECK(*r.round_reached <= previous);
        previous = *r.round_reached;
    }

    CHECK_THROWS_AS(systems_budget(std::vector<RoundLog>{skipped}, 0.5, AccuracyWeighting::per_sample), ArgumentError);
}

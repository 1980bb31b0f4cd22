#include <cmath>
#include <random>

#include <doctest.h>

#include "fedsim/error.hpp"
#include "fedsim/model.hpp"
#include "oracles.hpp"

using namespace fedsim;

namespace {

struct Batch {
    std::vector<double> x;
    std::vector<std::int32_t> y;
    std::size_t dim;
    BatchView view() const { return {x, y, dim}; }
};

Batch random_batch(std::mt19937_64& rng, std::size_t m, std::size_t d, std::size_t c)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::int32_t> label(0, static_cast<std::int32_t>(c) - 1);
    Batch b{std::vector<double>(m * d), std::vector<std::int32_t>(m), d};
    for (auto& v : b.x) {
        v = normal(rng);
    }
    for (auto& v : b.y) {
        v = label(rng);
    }
    return b;
}

ModelSpec random_spec(std::mt19937_64& rng, bool hidden)
{
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    std::uniform_int_distribution<std::size_t> cls(2, 6);
    ModelSpec s;
    s.kind = hidden ? ModelKind::one_hidden : ModelKind::linear;
    s.feature_dim = dim(rng);
    s.num_classes = cls(rng);
    s.hidden_dim = hidden ? dim(rng) : 0;
    return s;
}

double max_relative_fd_error(const ModelSpec& spec, const std::vector<double>& p, const Batch& b)
{
    const auto g = gradient(spec, p, b.view()).grad;
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto plus = p;
        auto minus = p;
        plus[i] += h;
        minus[i] -= h;
        const long double fd = (oracle::loss(spec, plus, b.x, b.y) - oracle::loss(spec, minus, b.x, b.y)) / (2.0L * h);
        const double diff = std::abs(g[i] - static_cast<double>(fd));
        const double scale = std::max({std::abs(g[i]), std::abs(static_cast<double>(fd)), 1e-6});
        worst = std::max(worst, diff / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("parameter counts and init")
{
    ModelSpec lin{ModelKind::linear, 2, 3, 0};
    const auto z = init_params(lin, InitScheme::zeros());
    CHECK(z == std::vector<double>(9, 0.0));
    ModelSpec hid{ModelKind::one_hidden, 4, 2, 3};
    CHECK(hid.num_params() == 23);
    CHECK(init_params(hid, InitScheme::gaussian(0.1, 5)) == init_params(hid, InitScheme::gaussian(0.1, 5)));
    CHECK(init_params(hid, InitScheme::gaussian(0.1, 5)) != init_params(hid, InitScheme::gaussian(0.1, 6)));
    CHECK_THROWS_AS((ModelSpec{ModelKind::one_hidden, 4, 2, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((ModelSpec{ModelKind::linear, 0, 2, 0}.validate()), ConfigError);
}

TEST_CASE("zero parameters give loss ln c")
{
    std::mt19937_64 rng(1);
    const auto b = random_batch(rng, 7, 3, 5);
    ModelSpec spec{ModelKind::linear, 3, 5, 0};
    const auto f = forward_loss(spec, init_params(spec, InitScheme::zeros()), b.view());
    CHECK(f.mean_loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
    for (auto p : f.predictions) {
        CHECK(p == 0);
    }
}

TEST_CASE("loss matches the long-double reference")
{
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto spec = random_spec(rng, t % 2 == 1);
        const auto p = oracle::random_params(rng, spec.num_params(), 1.5);
        const auto b = random_batch(rng, 1 + t % 9, spec.feature_dim, spec.num_classes);
        const double ours = forward_loss(spec, p, b.view()).mean_loss;
        const auto ref = static_cast<double>(oracle::loss(spec, p, b.x, b.y));
        REQUIRE(std::abs(ours - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("analytic gradient matches central finite differences")
{
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        for (bool hidden : {false, true}) {
            const auto spec = random_spec(rng, hidden);
            const auto p = oracle::random_params(rng, spec.num_params(), 0.7);
            const auto b = random_batch(rng, 1 + t % 6, spec.feature_dim, spec.num_classes);
            REQUIRE(max_relative_fd_error(spec, p, b) < 1e-4);
        }
    }
}

TEST_CASE("analytic gradient matches hand backprop")
{
    std::mt19937_64 rng(4);
    for (int t = 0; t < 40; ++t) {
        const auto spec = random_spec(rng, t % 2 == 0);
        const auto p = oracle::random_params(rng, spec.num_params(), 1.0);
        const auto b = random_batch(rng, 1 + t % 5, spec.feature_dim, spec.num_classes);
        const auto g = gradient(spec, p, b.view()).grad;
        const auto ref = oracle::gradient_sum(spec, p, b.x, b.y);
        for (std::size_t i = 0; i < g.size(); ++i) {
            REQUIRE(std::abs(g[i] - static_cast<double>(ref[i] / b.y.size())) < 1e-13);
        }
    }
}

TEST_CASE("zero-parameter gradient is (1/c - onehot) x~")
{
    ModelSpec spec{ModelKind::linear, 2, 4, 0};
    const Batch b{{0.5, -2.0}, {1}, 2};
    const auto g = gradient(spec, init_params(spec, InitScheme::zeros()), b.view()).grad;
    const double xt[3] = {0.5, -2.0, 1.0};
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(g[j * 3 + k] == doctest::Approx((0.25 - (j == 1 ? 1.0 : 0.0)) * xt[k]).epsilon(1e-15));
        }
    }
}

TEST_CASE("flop counts follow the documented model and are additive")
{
    ModelSpec lin{ModelKind::linear, 60, 5, 0};
    for (std::uint64_t m : {1, 5, 17}) {
        CHECK(forward_flops(lin, m) == m * (2 * 61 * 5 + 5 * 5));
        CHECK(gradient_flops(lin, m) == m * (2 * 61 * 5 + 5 * 5) + m * (4 * 61 * 5));
    }
    CHECK(update_flops(lin) == 2 * 305);
    ModelSpec hid{ModelKind::one_hidden, 4, 3, 6};
    CHECK(forward_flops(hid, 2) == 2 * (2 * 5 * 6 + 2 * 7 * 3 + 5 * 3));
    for (std::size_t a = 1; a < 6; ++a) {
        for (std::size_t b = 1; b < 6; ++b) {
            CHECK(gradient_flops(hid, a + b) == gradient_flops(hid, a) + gradient_flops(hid, b));
            CHECK(forward_flops(lin, a + b) == forward_flops(lin, a) + forward_flops(lin, b));
        }
    }
    std::mt19937_64 rng(5);
    const auto batch = random_batch(rng, 9, 60, 5);
    CHECK(gradient(lin, init_params(lin, InitScheme::zeros()), batch.view()).flops == gradient_flops(lin, 9));
}

TEST_CASE("sgd_step arithmetic")
{
    std::vector<double> p{1.0, 1.0};
    sgd_step(p, std::vector<double>{1.0, 2.0}, 0.5);
    CHECK(p == std::vector<double>{0.5, 0.0});
    sgd_step(p, std::vector<double>{0.0, 0.0}, 3.0);
    CHECK(p == std::vector<double>{0.5, 0.0});

    std::vector<double> a{0.3, -0.7};
    std::vector<double> b = a;
    const std::vector<double> g{0.25, 1.5};
    sgd_step(a, g, 0.5);
    sgd_step(a, g, 0.25);
    sgd_step(b, g, 0.75);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-15));
    CHECK_THROWS_AS(sgd_step(a, std::vector<double>{1.0}, 0.1), ShapeError);
}

TEST_CASE("positive scaling and logit shifts leave predictions unchanged")
{
    std::mt19937_64 rng(6);
    for (int t = 0; t < 50; ++t) {
        const auto spec = random_spec(rng, false);
        auto p = oracle::random_params(rng, spec.num_params(), 1.0);
        const auto b = random_batch(rng, 20, spec.feature_dim, spec.num_classes);
        const auto base = forward_loss(spec, p, b.view());

        auto scaled = p;
        for (auto& v : scaled) {
            v *= 3.7;
        }
        CHECK(predict(spec, scaled, b.view()) == base.predictions);

        // Adding a constant to each class's bias shifts every logit row by the same amount.
        auto shifted = p;
        for (std::size_t j = 0; j < spec.num_classes; ++j) {
            shifted[j * (spec.feature_dim + 1) + spec.feature_dim] += 2.5;
        }
        const auto moved = forward_loss(spec, shifted, b.view());
        CHECK(moved.predictions == base.predictions);
        CHECK(std::abs(moved.mean_loss - base.mean_loss) <= 1e-12);
    }
}

TEST_CASE("small steps decrease the loss")
{
    std::mt19937_64 rng(7);
    int decreased = 0;
    for (int t = 0; t < 100; ++t) {
        const auto spec = random_spec(rng, t % 2 == 0);
        auto p = oracle::random_params(rng, spec.num_params(), 0.5);
        const auto b = random_batch(rng, 8, spec.feature_dim, spec.num_classes);
        const auto g = gradient(spec, p, b.view());
        sgd_step(p, g.grad, 1e-3);
        decreased += forward_loss(spec, p, b.view()).mean_loss < g.mean_loss ? 1 : 0;
    }
    CHECK(decreased >= 95);
}

TEST_CASE("accuracy_top1")
{
    ModelSpec spec{ModelKind::linear, 1, 2, 0};
    // Class 1 when x > 0: logits (0, 2x).
    const std::vector<double> p{0.0, 0.0, 2.0, 0.0};
    Batch b{{}, {}, 1};
    for (int i = -5; i < 5; ++i) {
        b.x.push_back(i + 0.5);
        b.y.push_back(i >= 0 ? 1 : 0);
    }
    CHECK(accuracy_top1(spec, p, b.view()) == 1.0);

    Batch zeros{{1.0, 2.0, 3.0}, {0, 0, 0}, 1};
    CHECK(accuracy_top1(spec, init_params(spec, InitScheme::zeros()), zeros.view()) == 1.0);

    std::mt19937_64 rng(8);
    ModelSpec five{ModelKind::linear, 4, 5, 0};
    const auto big = random_batch(rng, 10000, 4, 5);
    const double acc = accuracy_top1(five, oracle::random_params(rng, five.num_params(), 1.0), big.view());
    CHECK(std::abs(acc - 0.2) <= 0.02);

    Batch empty{{}, {}, 1};
    CHECK_THROWS_AS(accuracy_top1(spec, p, empty.view()), ArgumentError);
}

TEST_CASE("shape and label errors")
{
    ModelSpec spec{ModelKind::linear, 2, 3, 0};
    const Batch b{{1.0, 2.0}, {0}, 2};
    CHECK_THROWS_AS(forward_loss(spec, std::vector<double>(8, 0.0), b.view()), ShapeError);
    const Batch bad{{1.0, 2.0}, {3}, 2};
    CHECK_THROWS_AS(gradient(spec, std::vector<double>(9, 0.0), bad.view()), ShapeError);
    const Batch wrong_dim{{1.0, 2.0, 3.0}, {0}, 3};
    CHECK_THROWS_AS(forward_loss(spec, std::vector<double>(9, 0.0), wrong_dim.view()), ShapeError);
    const std::vector<double> huge(9, 1e308);
    const Batch big{{1e308, 1e308}, {0}, 2};
    CHECK_THROWS_AS(forward_loss(spec, huge, big.view()), NumericError);
}

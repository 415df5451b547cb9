#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fluoro/errors.hpp"
#include "fluoro/fault.hpp"
#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/linear.hpp"
#include "fluoro/numerics/ops.hpp"
#include "fluoro/numerics/precision.hpp"
#include "test_util.hpp"

using namespace fluoro;
using nx::Tensor;
using testing::random_tensor;

TEST_CASE("matmul identity and selector") {
    auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(testing::values(nx::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
    auto out = nx::matmul(Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {0, 5}));
    CHECK(out.shape() == nx::Shape{1, 1});
    CHECK(out.item() == 0.0);
    CHECK_THROWS_AS(nx::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("softmax") {
    auto s = nx::softmax(Tensor::from({3}, {1, 1, 1}), 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    auto big = nx::softmax(Tensor::from({2}, {1000, 0}), 0);
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);
    CHECK_THROWS_AS(nx::softmax(Tensor::zeros({2, 0}), 1), DimensionError);

    std::mt19937_64 rng(3);
    auto x = random_tensor({4, 6}, rng, -20.0, 20.0, false);
    auto y = nx::softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 6; ++c) {
            const double v = y[r * 6 + c];
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("elementwise values") {
    CHECK(nx::sigm(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(nx::gelu(Tensor::scalar(0.0)).item() == 0.0);
    CHECK(testing::values(nx::hadamard(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}))) ==
          std::vector<double>{3, 8});
    CHECK(nx::gelu_value(1.0) == doctest::Approx(0.8413447460685429));
    CHECK(nx::gelu_value(-1.0) == doctest::Approx(-0.15865525393145707));
    CHECK(nx::tanh(Tensor::scalar(0.5)).item() == doctest::Approx(std::tanh(0.5)));
    CHECK(testing::values(nx::sub(Tensor::from({2}, {5, 1}), Tensor::from({2}, {2, 2}))) == std::vector<double>{3, -1});
    CHECK(testing::values(nx::scale(Tensor::from({2}, {1, -2}), 3.0)) == std::vector<double>{3, -6});
    CHECK_THROWS_AS(nx::add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
    CHECK_THROWS_AS(nx::hadamard(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST_CASE("non-finite values are rejected") {
    CHECK_THROWS_AS(nx::scale(Tensor::scalar(1e308), 10.0), NumericError);
    CHECK_THROWS_AS(nx::add_scalar(Tensor::from({1}, {std::nan("")}), 1.0), NumericError);
}

TEST_CASE("norm_stats") {
    const double eps = 1e-5;
    auto c = nx::norm_stats(Tensor::from({4}, {2, 2, 2, 2}), 0, eps);
    CHECK(c.mean.item() == 2.0);
    CHECK(c.std.item() == eps);
    auto d = nx::norm_stats(Tensor::from({2}, {0, 2}), 0, eps);
    CHECK(d.mean.item() == 1.0);
    CHECK(d.std.item() == doctest::Approx(1.0 + eps).epsilon(1e-15));

    std::mt19937_64 rng(5);
    auto x = random_tensor({16}, rng, -3.0, 3.0, false);
    double mean = 0.0;
    for (double v : x.data()) mean += v;
    mean /= 16.0;
    double ss = 0.0;
    for (double v : x.data()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / 16.0) + eps;
    auto s = nx::norm_stats(x, 0, eps);
    CHECK(std::abs(s.mean.item() - mean) < 1e-12);
    CHECK(std::abs(s.std.item() - sd) < 1e-12);
}

TEST_CASE("backward basics") {
    std::mt19937_64 rng(1);
    auto x = random_tensor({2, 3}, rng);
    nx::backward(nx::sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    auto y = Tensor::scalar(3.0, true);
    auto loss = nx::hadamard(y, y);
    nx::backward(loss);
    CHECK(y.grad()[0] == 6.0);
    CHECK_THROWS_AS(nx::backward(loss), ContractError);
    CHECK_THROWS_AS(nx::backward(nx::scale(Tensor::zeros({2}, true), 1.0)), ContractError);
}

TEST_CASE("gradient accumulates across uses of a leaf") {
    auto x = Tensor::from({2}, {1.5, -2.0}, true);
    nx::backward(nx::sum(nx::add(nx::hadamard(x, x), x)));
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("no-grad scope records nothing") {
    auto x = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
        nx::NoGradScope guard;
        y = nx::scale(x, 2.0);
    }
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("every primitive matches finite differences over 50 seeds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        double worst = 0.0;
        auto track = [&](const nx::GradCheckReport& r) { worst = std::max(worst, r.worst_rel_error()); };
        auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
        auto w2 = random_tensor({3, 2}, rng, -1, 1, false);
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::matmul(a, b), w2)); }, {{"a", a}, {"b", b}}));
        auto x = random_tensor({5}, rng, -2.0, 2.0);
        auto w5 = random_tensor({5}, rng, -1, 1, false);
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::softmax(x, 0), w5)); }, {{"x", x}}));
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::tanh(x), w5)); }, {{"x", x}}));
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::sigm(x), w5)); }, {{"x", x}}));
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::gelu(x), w5)); }, {{"x", x}}));
        auto y = random_tensor({5}, rng);
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::hadamard(x, y), w5)); },
                                  {{"x", x}, {"y", y}}));
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::sub(nx::add(x, y), nx::scale(y, 0.3)), w5)); },
                                  {{"x", x}, {"y", y}}));
        auto p = random_tensor({5}, rng, 0.2, 0.9);
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::cumprod(p), w5)); }, {{"p", p}}));
        track(nx::check_gradients([&] { return nx::sum(nx::hadamard(nx::log_clamped(p, 1e-12), w5)); }, {{"p", p}}));
        auto g = random_tensor({5}, rng), be = random_tensor({5}, rng);
        auto xs = random_tensor({3, 5}, rng, -2.0, 2.0);
        auto w35 = random_tensor({3, 5}, rng, -1, 1, false);
        track(nx::check_gradients(
            [&] { return nx::sum(nx::hadamard(nx::normalize_last(xs, g, be, 1e-5), w35)); },
            {{"x", xs}, {"gamma", g}, {"beta", be}}));
        CHECK_MESSAGE(worst < 1e-6, "seed " << seed << " worst " << worst);
    }
}

TEST_CASE("log clamp keeps the floor finite") {
    auto x = Tensor::from({2}, {0.0, 1.0}, true);
    auto y = nx::log_clamped(x, 1e-12);
    CHECK(y[0] == doctest::Approx(std::log(1e-12)));
    CHECK(y[1] == 0.0);
    nx::backward(nx::sum(y));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("forward is bit-identical on replay") {
    std::mt19937_64 rng(9);
    auto layer = nx::Linear::init(6, 4, rng);
    auto x = random_tensor({3, 6}, rng, -1, 1, false);
    auto a = testing::values(nx::gelu(nx::linear(x, layer)));
    auto b = testing::values(nx::gelu(nx::linear(x, layer)));
    CHECK(a == b);
}

TEST_CASE("f32 precision rounds op outputs") {
    nx::PrecisionScope scope(nx::Precision::f32);
    auto y = nx::scale(Tensor::from({1}, {1.0}), 0.1);
    CHECK(y[0] == static_cast<double>(0.1f));
    CHECK(nx::precision() == nx::Precision::f32);
}

TEST_CASE("precision strings") {
    CHECK(nx::precision_from_string("f64") == nx::Precision::f64);
    CHECK(nx::to_string(nx::Precision::f32) == "f32");
    CHECK_THROWS_AS(nx::precision_from_string("f16"), ConfigError);
}

TEST_CASE("gradient check flags a wrong gradient") {
    // A fault in the GELU backward rule must show up in the harness.
    auto x = Tensor::from({3}, {0.3, -0.7, 1.1}, true);
    auto f = [&] { return nx::sum(nx::gelu(x)); };
    CHECK(nx::check_gradients(f, {{"x", x}}).worst_rel_error() < 1e-8);
    fault::Scope broken(fault::Fault::gelu_backward);
    CHECK(nx::check_gradients(f, {{"x", x}}).worst_rel_error() > 1e-3);
}

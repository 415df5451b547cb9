#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fluoro/errors.hpp"
#include "fluoro/numerics/gradcheck.hpp"
#include "fluoro/numerics/ops.hpp"
#include "fluoro/pooling/pooling.hpp"
#include "fluoro/reference/reference.hpp"
#include "test_util.hpp"

using namespace fluoro;
using nx::Tensor;
using testing::random_tensor;

namespace {

struct Heads {
    pooling::GatedAttentionParams att;
    pooling::ClassifierParams cls;
};

Heads make(std::size_t e, std::size_t a, std::size_t bins, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto att = pooling::GatedAttentionParams::init(e, a, rng);
    auto cls = pooling::ClassifierParams::init(e, bins, rng);
    return {att, cls};
}

}  // namespace

TEST_CASE("single patch gets all the attention") {
    auto h = make(5, 7, 4, 1);
    std::mt19937_64 rng(2);
    auto f = random_tensor({1, 5}, rng, -1, 1, false);
    auto out = pooling::pool_and_classify(f, h.att, h.cls);
    CHECK(out.attention.item() == 1.0);
    CHECK(testing::values(out.bag) == testing::values(nx::reshape(f, {5})));
}

TEST_CASE("identical patches share attention equally") {
    auto h = make(4, 3, 4, 3);
    auto f = Tensor::from({2, 4}, {0.1, -0.4, 0.7, 0.2, 0.1, -0.4, 0.7, 0.2});
    auto a = pooling::gated_attention(f, h.att);
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
}

TEST_CASE("pooling matches the loop oracle") {
    auto h = make(6, 5, 4, 4);
    std::mt19937_64 rng(5);
    auto f = random_tensor({4, 6}, rng, -1, 1, false);
    auto out = pooling::pool_and_classify(f, h.att, h.cls);
    const auto ref = reference::pool(f.data(), 4, h.att, h.cls);
    CHECK(testing::max_abs_diff(out.attention.data(), ref.attention) < 1e-10);
    CHECK(testing::max_abs_diff(out.bag.data(), ref.bag) < 1e-10);
    CHECK(testing::max_abs_diff(out.logits.data(), ref.logits) < 1e-10);
    double total = 0.0;
    for (double a : out.attention.data()) {
        CHECK(a > 0.0);
        CHECK(a < 1.0);
        total += a;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("classifier special cases") {
    auto h = make(3, 2, 3, 6);
    for (auto& w : h.cls.head.weight.mutable_data()) w = 0.0;
    auto bias = h.cls.head.bias.mutable_data();
    bias[0] = 0.25;
    bias[1] = -1.0;
    bias[2] = 3.0;
    auto bag = Tensor::from({3}, {5, 6, 7});
    CHECK(testing::values(pooling::classify(bag, h.cls)) == std::vector<double>{0.25, -1.0, 3.0});

    auto w = h.cls.head.weight.mutable_data();  // [in x out] selector
    for (std::size_t i = 0; i < 3; ++i) w[i * 3 + (2 - i)] = 1.0;
    for (auto& b : bias) b = 0.0;
    CHECK(testing::values(pooling::classify(bag, h.cls)) == std::vector<double>{7, 6, 5});
}

TEST_CASE("patch permutation leaves bag vector and logits unchanged") {
    auto h = make(8, 6, 4, 7);
    std::mt19937_64 rng(8);
    const std::size_t K = 9;
    auto f = random_tensor({K, 8}, rng, -1, 1, false);
    const auto base = pooling::pool_and_classify(f, h.att, h.cls);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> perm(K);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> v;
        for (auto k : perm)
            for (std::size_t e = 0; e < 8; ++e) v.push_back(f[k * 8 + e]);
        const auto out = pooling::pool_and_classify(Tensor::from({K, 8}, v), h.att, h.cls);
        CHECK(testing::max_abs_diff(out.bag.data(), base.bag.data()) < 1e-9);
        CHECK(testing::max_abs_diff(out.logits.data(), base.logits.data()) < 1e-9);
        for (std::size_t k = 0; k < K; ++k) CHECK(std::abs(out.attention[k] - base.attention[perm[k]]) < 1e-12);
    }
}

TEST_CASE("composite gradient") {
    auto h = make(5, 4, 4, 9);
    std::mt19937_64 rng(10);
    auto f = random_tensor({3, 5}, rng);
    auto w = random_tensor({4}, rng, -1, 1, false);
    auto leaves = h.att.named_parameters();
    for (auto& p : h.cls.named_parameters()) leaves.push_back(p);
    leaves.push_back({"fused", f});
    const auto r = nx::check_gradients(
        [&] { return nx::sum(nx::hadamard(pooling::pool_and_classify(f, h.att, h.cls).logits, w)); }, leaves);
    CHECK(r.worst_rel_error() < 1e-4);
}

TEST_CASE("shape errors") {
    auto h = make(5, 4, 4, 11);
    CHECK_THROWS_AS(pooling::gated_attention(Tensor::zeros({3, 4}), h.att), DimensionError);
    CHECK_THROWS_AS(pooling::gated_attention(Tensor::zeros({0, 5}), h.att), DimensionError);
    CHECK_THROWS_AS(pooling::pool(Tensor::zeros({3, 5}), Tensor::zeros({2})), DimensionError);
    CHECK_THROWS_AS(pooling::classify(Tensor::zeros({4}), h.cls), DimensionError);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "vidnn/kernels.hpp"

using namespace vidnn;

TEST_CASE("tensor shape and data stay consistent") {
    Tensor t(Shape{2, 3});
    REQUIRE(t.size() == 6);
    REQUIRE_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
    REQUIRE_THROWS_AS(Tensor(Shape{2, 2}, {1.0f, 2.0f, 3.0f}), DimensionError);
    REQUIRE_THROWS_AS(t.reshaped(Shape{4, 2}), DimensionError);
    Tensor r = t.reshaped(Shape{3, 2});
    REQUIRE(r.shape() == Shape{3, 2});
}

TEST_CASE("matmul identity and tiny products") {
    Tensor a = Tensor::from(Shape{2, 2}, {3, 4, 5, 6});
    Tensor out = matmul(Tensor::identity(2), a);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(out[i] == a[i]);

    Tensor row = Tensor::from(Shape{1, 2}, {1, 2});
    Tensor col = Tensor::from(Shape{2, 1}, {3, 4});
    REQUIRE(matmul(row, col)[0] == 11.0f);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
    Tensor a(Shape{2, 3}), b(Shape{4, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("[2,3]") != std::string::npos);
        REQUIRE(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("matmul matches the triple-loop oracle bit for bit") {
    Rng rng(101);
    // the spec's pinned instance first
    {
        Tensor a = oracle::random_tensor(rng, Shape{4, 5});
        Tensor b = oracle::random_tensor(rng, Shape{5, 3});
        Tensor got = matmul(a, b);
        Tensor want = oracle::matmul(a, b);
        for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(got[i] == want[i]);
    }
    for (int iter = 0; iter < 120; ++iter) {
        const int m = 1 + static_cast<int>(rng.index(8));
        const int k = 1 + static_cast<int>(rng.index(8));
        const int n = 1 + static_cast<int>(rng.index(8));
        Tensor a = oracle::random_tensor(rng, Shape{m, k});
        Tensor b = oracle::random_tensor(rng, Shape{k, n});
        Tensor got = matmul(a, b);
        Tensor want = oracle::matmul(a, b);
        for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(got[i] == want[i]);
    }
}

TEST_CASE("conv2d scaling kernel and box sum") {
    Tensor in = Tensor::from(Shape{3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k1 = Tensor::from(Shape{1, 1, 1, 1}, {2});
    Tensor bias0(Shape{1});
    Tensor doubled = conv2d(in, k1, bias0, 1, Padding::valid);
    REQUIRE(doubled.shape() == Shape{3, 3, 1});
    for (std::size_t i = 0; i < 9; ++i) REQUIRE(doubled[i] == in[i] * 2.0f);

    Tensor k3 = Tensor::full(Shape{3, 3, 1, 1}, 1.0f);
    Tensor summed = conv2d(in, k3, bias0, 1, Padding::valid);
    REQUIRE(summed.shape() == Shape{1, 1, 1});
    REQUIRE(summed[0] == 45.0f);
}

TEST_CASE("conv2d rejects kernels larger than the input") {
    Tensor in(Shape{2, 2, 1});
    Tensor k(Shape{3, 3, 1, 1});
    Tensor b(Shape{1});
    REQUIRE_THROWS_AS(conv2d(in, k, b, 1, Padding::valid), DimensionError);
    REQUIRE_NOTHROW(conv2d(in, k, b, 1, Padding::same));
}

TEST_CASE("conv2d matches the naive sliding-window oracle") {
    Rng rng(202);
    // pinned instance: 8x8x3 input, 3x3x3x4 kernels, same padding
    {
        Tensor in = oracle::random_tensor(rng, Shape{8, 8, 3});
        Tensor k = oracle::random_tensor(rng, Shape{3, 3, 3, 4});
        Tensor b = oracle::random_tensor(rng, Shape{4});
        Tensor got = conv2d(in, k, b, 1, Padding::same);
        Tensor want = oracle::conv2d(in, k, b, 1, true);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) < 1e-5f);
    }
    for (int iter = 0; iter < 120; ++iter) {
        const int h = 2 + static_cast<int>(rng.index(7));
        const int w = 2 + static_cast<int>(rng.index(7));
        const int cin = 1 + static_cast<int>(rng.index(3));
        const int cout = 1 + static_cast<int>(rng.index(4));
        const int ks = 1 + static_cast<int>(rng.index(std::min(3, std::min(h, w))));
        const int stride = 1 + static_cast<int>(rng.index(2));
        const bool same = rng.index(2) == 0;
        Tensor in = oracle::random_tensor(rng, Shape{h, w, cin});
        Tensor k = oracle::random_tensor(rng, Shape{ks, ks, cin, cout});
        Tensor b = oracle::random_tensor(rng, Shape{cout});
        Tensor got = conv2d(in, k, b, stride, same ? Padding::same : Padding::valid);
        Tensor want = oracle::conv2d(in, k, b, stride, same);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) < 1e-5f);
    }
}

TEST_CASE("maxpool basics") {
    Tensor in = Tensor::from(Shape{2, 2, 1}, {1, 2, 3, 4});
    PoolResult r = maxpool2d(in, 2, 2);
    REQUIRE(r.out.shape() == Shape{1, 1, 1});
    REQUIRE(r.out[0] == 4.0f);
    REQUIRE(r.argmax[0] == 3);

    Tensor c = Tensor::full(Shape{4, 4, 2}, 7.5f);
    PoolResult rc = maxpool2d(c, 2, 2);
    REQUIRE(rc.out.shape() == Shape{2, 2, 2});
    for (float v : rc.out) REQUIRE(v == 7.5f);

    REQUIRE_THROWS_AS(maxpool2d(in, 3, 1), DimensionError);
}

TEST_CASE("maxpool drops overrunning windows (floor semantics)") {
    Rng rng(303);
    Tensor in = oracle::random_tensor(rng, Shape{5, 5, 2});
    PoolResult r = maxpool2d(in, 2, 2);
    REQUIRE(r.out.shape() == Shape{2, 2, 2});
    Tensor want = oracle::maxpool2d(in, 2, 2);
    for (std::size_t i = 0; i < want.size(); ++i) REQUIRE(r.out[i] == want[i]);
}

TEST_CASE("maxpool matches the exhaustive oracle and argmax points at maxima") {
    Rng rng(404);
    for (int iter = 0; iter < 120; ++iter) {
        const int h = 2 + static_cast<int>(rng.index(7));
        const int w = 2 + static_cast<int>(rng.index(7));
        const int c = 1 + static_cast<int>(rng.index(3));
        const int window = 1 + static_cast<int>(rng.index(std::min(h, w)));
        const int stride = 1 + static_cast<int>(rng.index(3));
        Tensor in = oracle::random_tensor(rng, Shape{h, w, c});
        PoolResult r = maxpool2d(in, window, stride);
        Tensor want = oracle::maxpool2d(in, window, stride);
        REQUIRE(r.out.shape() == want.shape());
        for (std::size_t i = 0; i < want.size(); ++i) {
            REQUIRE(std::abs(r.out[i] - want[i]) < 1e-5f);
            REQUIRE(in[static_cast<std::size_t>(r.argmax[i])] == r.out[i]);
        }
    }
}

TEST_CASE("maxpool ties break toward the first element in row-major order") {
    Tensor in = Tensor::full(Shape{2, 2, 1}, 1.0f);
    PoolResult r = maxpool2d(in, 2, 2);
    REQUIRE(r.argmax[0] == 0);
}

TEST_CASE("activation point values") {
    Tensor x = Tensor::from(Shape{3}, {0.0f, 0.0f, -3.0f});
    REQUIRE(sigmoid(x)[0] == 0.5f);
    REQUIRE(tanh_t(x)[1] == 0.0f);
    REQUIRE(relu(x)[2] == 0.0f);
}

TEST_CASE("sigmoid symmetry identity") {
    Rng rng(505);
    for (int i = 0; i < 50; ++i) {
        const float v = rng.uniform(-8.0f, 8.0f);
        Tensor pos = Tensor::from(Shape{1}, {v});
        Tensor neg = Tensor::from(Shape{1}, {-v});
        REQUIRE(std::abs(sigmoid(neg)[0] - (1.0f - sigmoid(pos)[0])) < 1e-6f);
    }
}

TEST_CASE("softmax basics and stability") {
    Tensor two = softmax(Tensor::from(Shape{2}, {0, 0}));
    REQUIRE(two[0] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(two[1] == Catch::Approx(0.5).margin(1e-6));

    Tensor three = softmax(Tensor::from(Shape{3}, {1, 1, 1}));
    for (float v : three) REQUIRE(v == Catch::Approx(1.0 / 3.0).margin(1e-6));

    Tensor big = softmax(Tensor::from(Shape{2}, {1000, 1000}));
    REQUIRE(big[0] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(big.all_finite());
}

TEST_CASE("softmax is nonnegative, normalized and shift invariant") {
    Rng rng(606);
    for (int iter = 0; iter < 60; ++iter) {
        const int n = 2 + static_cast<int>(rng.index(7));
        Tensor x = oracle::random_tensor(rng, Shape{n}, -5.0f, 5.0f);
        Tensor y = softmax(x);
        double sum = 0.0;
        for (float v : y) {
            REQUIRE(v >= 0.0f);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);

        const float shift = rng.uniform(-20.0f, 20.0f);
        Tensor xs = x;
        for (float& v : xs) v += shift;
        Tensor ys = softmax(xs);
        for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(std::abs(y[i] - ys[i]) < 1e-6f);
    }
}

TEST_CASE("kernels are deterministic across repeated runs") {
    Rng rng(707);
    Tensor in = oracle::random_tensor(rng, Shape{7, 7, 3});
    Tensor k = oracle::random_tensor(rng, Shape{3, 3, 3, 5});
    Tensor b = oracle::random_tensor(rng, Shape{5});
    Tensor first = conv2d(in, k, b, 1, Padding::same);
    for (int i = 0; i < 3; ++i) {
        Tensor again = conv2d(in, k, b, 1, Padding::same);
        REQUIRE(std::memcmp(first.data(), again.data(), first.size() * sizeof(float)) == 0);
    }

    Tensor a = oracle::random_tensor(rng, Shape{6, 9});
    Tensor bb = oracle::random_tensor(rng, Shape{9, 4});
    Tensor m1 = matmul(a, bb);
    Tensor m2 = matmul(a, bb);
    REQUIRE(std::memcmp(m1.data(), m2.data(), m1.size() * sizeof(float)) == 0);
}

TEST_CASE("same padding output size is ceil(in/stride)") {
    Tensor in(Shape{11, 5, 1});
    Tensor k(Shape{3, 3, 1, 2});
    Tensor b(Shape{2});
    REQUIRE(conv2d(in, k, b, 2, Padding::same).shape() == Shape{6, 3, 2});
    REQUIRE(conv2d(in, k, b, 1, Padding::same).shape() == Shape{11, 5, 2});
    REQUIRE(conv2d(in, k, b, 1, Padding::valid).shape() == Shape{9, 3, 2});
}

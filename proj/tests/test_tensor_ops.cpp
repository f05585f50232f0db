#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "approx.hpp"
#include "naive_ops.hpp"
#include "rlens/tensor.hpp"

using namespace rlens;

namespace {

Matrix random_matrix(int64_t r, int64_t c, std::mt19937& rng, float stddev = 1.0f) {
    std::normal_distribution<float> dist(0.0f, stddev);
    Matrix m(r, c);
    for (float& v : m.data) v = dist(rng);
    return m;
}

std::vector<float> random_vec(size_t n, std::mt19937& rng, float stddev = 1.0f) {
    std::normal_distribution<float> dist(0.0f, stddev);
    std::vector<float> v(n);
    for (float& x : v) x = dist(rng);
    return v;
}

}  // namespace

TEST_CASE("matmul identity") {
    Matrix id(2, 2);
    id.at(0, 0) = 1.0f;
    id.at(1, 1) = 1.0f;
    Matrix b(2, 2);
    b.data = {3, 4, 5, 6};
    const Matrix out = matmul(id, b);
    CHECK(out.data == std::vector<float>{3, 4, 5, 6});
}

TEST_CASE("matmul 1x2 by 2x1") {
    Matrix a(1, 2);
    a.data = {1, 2};
    Matrix b(2, 1);
    b.data = {3, 4};
    const Matrix out = matmul(a, b);
    REQUIRE(out.rows == 1);
    REQUIRE(out.cols == 1);
    CHECK(out.data[0] == 11.0f);
}

TEST_CASE("matmul matches the naive triple-loop reference") {
    std::mt19937 rng(101);
    const Matrix a = random_matrix(5, 7, rng);
    const Matrix b = random_matrix(7, 3, rng);
    const Matrix got = matmul(a, b);
    const Matrix want = ref::naive_matmul(a, b);
    for (size_t i = 0; i < got.data.size(); ++i) {
        CHECK_ABS(got.data[i], want.data[i], 1e-6);
    }
}

TEST_CASE("matmul_nt equals matmul against the transpose") {
    std::mt19937 rng(102);
    const Matrix a = random_matrix(4, 6, rng);
    const Matrix b = random_matrix(6, 5, rng);
    const Matrix direct = matmul(a, b);
    const Matrix via_nt = matmul_nt(a, transpose(b));
    for (size_t i = 0; i < direct.data.size(); ++i) {
        CHECK_ABS(via_nt.data[i], direct.data[i], 1e-6);
    }
}

TEST_CASE("matmul dimension mismatch throws") {
    Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(matmul_nt(a, Matrix(2, 4)), std::invalid_argument);
}

TEST_CASE("matmul associativity on small matrices") {
    std::mt19937 rng(103);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 5, rng);
    const Matrix c = random_matrix(5, 2, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    for (size_t i = 0; i < left.data.size(); ++i) {
        CHECK_ABS(left.data[i], right.data[i], 1e-4);
    }
}

TEST_CASE("softmax uniform") {
    const std::vector<float> v{0, 0, 0, 0};
    for (const float x : softmax(v, 1.0f)) {
        CHECK_ABS(x, 0.25, 1e-7);
    }
}

TEST_CASE("softmax large-logit stability") {
    const std::vector<float> v{1000.0f, 0.0f};
    const std::vector<float> p = softmax(v, 1.0f);
    CHECK(std::isfinite(p[0]));
    CHECK(std::isfinite(p[1]));
    CHECK_ABS(p[0], 1.0, 1e-6);
    CHECK_ABS(p[1], 0.0, 1e-6);
}

TEST_CASE("softmax matches high-precision oracle") {
    const std::vector<float> v{2, 1, 0, -1};
    const std::vector<float> got = softmax(v, 1.0f);
    const std::vector<double> want = ref::naive_softmax(v, 1.0);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK_ABS(got[i], want[i], 1e-6);
    }
}

TEST_CASE("softmax rejects non-positive temperature") {
    const std::vector<float> v{1, 2};
    CHECK_THROWS_AS(softmax(v, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(softmax(v, -1.0f), std::invalid_argument);
}

TEST_CASE("softmax sums to one and preserves the argmax") {
    std::mt19937 rng(104);
    for (int it = 0; it < 50; ++it) {
        const std::vector<float> v = random_vec(1 + it % 37, rng, 2.0f);
        for (const float t : {0.1f, 0.5f, 0.8f, 1.0f, 2.5f}) {
            const std::vector<float> p = softmax(v, t);
            double sum = 0.0;
            for (const float x : p) {
                // entries strictly positive except where exp underflows float
                if (t >= 0.5f) CHECK(x > 0.0f);
                CHECK(x >= 0.0f);
                sum += x;
            }
            CHECK_ABS(sum, 1.0, 1e-6);
            size_t argmax_v = 0, argmax_p = 0;
            for (size_t i = 1; i < v.size(); ++i) {
                if (v[i] > v[argmax_v]) argmax_v = i;
                if (p[i] > p[argmax_p]) argmax_p = i;
            }
            CHECK(argmax_v == argmax_p);
        }
    }
}

TEST_CASE("layer_norm standardized input is nearly unchanged") {
    // mean 0, population variance 1
    const std::vector<float> v{1, -1, 1, -1};
    const std::vector<float> gain(4, 1.0f), bias(4, 0.0f);
    const std::vector<float> out = layer_norm(v, gain, bias, 1e-5f);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK_ABS(out[i], v[i], 1e-4);
    }
}

TEST_CASE("layer_norm collapses a constant vector to the bias") {
    const std::vector<float> v(8, 3.7f);
    const std::vector<float> gain(8, 1.0f), bias(8, 0.0f);
    for (const float x : layer_norm(v, gain, bias, 1e-5f)) {
        CHECK_ABS(x, 0.0, 1e-6);
    }
}

TEST_CASE("layer_norm matches high-precision oracle") {
    std::mt19937 rng(105);
    const std::vector<float> v = random_vec(8, rng, 2.0f);
    const std::vector<float> gain = random_vec(8, rng);
    const std::vector<float> bias = random_vec(8, rng);
    const std::vector<float> got = layer_norm(v, gain, bias, 1e-5f);
    const std::vector<double> want = ref::naive_layer_norm(v, gain, bias, 1e-5);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK_ABS(got[i], want[i], 1e-6);
    }
}

TEST_CASE("layer_norm length mismatch throws") {
    const std::vector<float> v(4, 0.0f), g(3, 1.0f), b(4, 0.0f);
    CHECK_THROWS_AS(layer_norm(v, g, b, 1e-5f), std::invalid_argument);
}

TEST_CASE("layer_norm output statistics") {
    std::mt19937 rng(106);
    for (int it = 0; it < 20; ++it) {
        const size_t n = 8 + it;
        const std::vector<float> v = random_vec(n, rng, 4.0f);
        const std::vector<float> gain(n, 1.0f), bias(n, 0.0f);
        const std::vector<float> out = layer_norm(v, gain, bias, 1e-5f);
        double mean = 0.0;
        for (const float x : out) mean += x;
        mean /= static_cast<double>(n);
        CHECK(std::abs(mean) <= 1e-5);
        double var = 0.0;
        for (const float x : out) var += (x - mean) * (x - mean);
        var /= static_cast<double>(n);
        CHECK_ABS(var, 1.0, 1e-3);
    }
}

TEST_CASE("gelu fixed points") {
    CHECK(gelu_scalar(0.0f) == 0.0f);
    CHECK_ABS(gelu_scalar(20.0f), 20.0, 1e-4);
    // frozen from the 64-bit tanh-formula oracle
    CHECK_ABS(ref::naive_gelu(1.0), 0.8411919906082768, 1e-12);
    CHECK_ABS(gelu_scalar(1.0f), 0.8411919906082768, 1e-6);
    const std::vector<float> v{-2.0f, 0.5f, 3.0f};
    const std::vector<float> out = gelu(v);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK_ABS(out[i], ref::naive_gelu(v[i]), 1e-6);
    }
}

TEST_CASE("cosine basics") {
    const std::vector<float> a{1, 2, 3};
    CHECK_ABS(cosine(a, a), 1.0, 1e-12);
    const std::vector<float> ex{1, 0}, ey{0, 1};
    CHECK_ABS(cosine(ex, ey), 0.0, 1e-12);
    const std::vector<float> b{4, 5, 6};
    CHECK_ABS(cosine(a, b), ref::naive_cosine(a, b), 1e-9);
    CHECK_ABS(cosine(a, b), 0.9746318461970762, 1e-9);
}

TEST_CASE("cosine zero-norm input throws") {
    const std::vector<float> a{1, 2}, z{0, 0};
    CHECK_THROWS_AS(cosine(a, z), std::invalid_argument);
    CHECK_THROWS_AS(cosine(z, a), std::invalid_argument);
}

TEST_CASE("cosine symmetry and bound") {
    std::mt19937 rng(107);
    for (int it = 0; it < 50; ++it) {
        const std::vector<float> a = random_vec(5 + it % 13, rng, 2.0f);
        const std::vector<float> b = random_vec(a.size(), rng, 2.0f);
        const double ab = cosine(a, b);
        CHECK(ab == cosine(b, a));
        CHECK(std::abs(ab) <= 1.0 + 1e-9);
    }
}

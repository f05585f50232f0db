#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rlens {

// Row-major float32 matrix. Storage and compute are float32; reductions
// (matmul dot products, norm statistics) accumulate in double.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0f) {}

    float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
    float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }

    std::span<float> row(int64_t r) {
        return {data.data() + r * cols, static_cast<size_t>(cols)};
    }
    std::span<const float> row(int64_t r) const {
        return {data.data() + r * cols, static_cast<size_t>(cols)};
    }

    bool operator==(const Matrix& o) const = default;
};

// a [m,k] x b [k,n] -> [m,n]
Matrix matmul(const Matrix& a, const Matrix& b);

// a [m,k] x b_t [n,k] -> [m,n], i.e. a * b_t^T. Row-by-row dot products;
// this is the orientation every checkpoint weight is normalized to.
Matrix matmul_nt(const Matrix& a, const Matrix& b_t);

Matrix transpose(const Matrix& a);

// Max-subtracted softmax of v / temperature. temperature must be > 0.
std::vector<float> softmax(std::span<const float> v, float temperature = 1.0f);

// (v - mean) / sqrt(var + epsilon) * gain + bias, population variance.
std::vector<float> layer_norm(std::span<const float> v, std::span<const float> gain,
                              std::span<const float> bias, float epsilon);

// tanh-approximation GELU, elementwise.
std::vector<float> gelu(std::span<const float> v);
float gelu_scalar(float x);

// dot(a,b) / (|a| |b|); throws on zero-norm input.
double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace rlens

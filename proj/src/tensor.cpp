#include "rlens/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rlens {

namespace {
// Parallelizing tiny products costs more than it saves.
constexpr int64_t kParallelFlopCutoff = 1 << 16;
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: dimension mismatch (" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols);
    const int64_t m = a.rows, k = a.cols, n = b.cols;
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlopCutoff)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                acc += static_cast<double>(a.data[i * k + p]) * b.data[p * n + j];
            }
            out.data[i * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b_t) {
    if (a.cols != b_t.cols) {
        throw std::invalid_argument("matmul_nt: dimension mismatch (" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b_t.cols) + ")");
    }
    Matrix out(a.rows, b_t.rows);
    const int64_t m = a.rows, k = a.cols, n = b_t.rows;
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlopCutoff)
    for (int64_t i = 0; i < m; ++i) {
        const float* ai = a.data.data() + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const float* bj = b_t.data.data() + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                acc += static_cast<double>(ai[p]) * bj[p];
            }
            out.data[i * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int64_t i = 0; i < a.rows; ++i) {
        for (int64_t j = 0; j < a.cols; ++j) {
            out.data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    return out;
}

std::vector<float> softmax(std::span<const float> v, float temperature) {
    if (!(temperature > 0.0f)) {
        throw std::invalid_argument("softmax: temperature must be positive");
    }
    std::vector<float> out(v.size());
    float max_val = -std::numeric_limits<float>::infinity();
    for (float x : v) {
        const float s = x / temperature;
        if (s > max_val) max_val = s;
    }
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        const double e = std::exp(static_cast<double>(v[i] / temperature) - max_val);
        out[i] = static_cast<float>(e);
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (float& x : out) {
        x = static_cast<float>(x * inv);
    }
    return out;
}

std::vector<float> layer_norm(std::span<const float> v, std::span<const float> gain,
                              std::span<const float> bias, float epsilon) {
    if (v.size() != gain.size() || v.size() != bias.size()) {
        throw std::invalid_argument("layer_norm: length mismatch");
    }
    if (!(epsilon > 0.0f)) {
        throw std::invalid_argument("layer_norm: epsilon must be positive");
    }
    const size_t n = v.size();
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float x : v) {
        const double d = x - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>((v[i] - mean) * inv_std) * gain[i] + bias[i];
    }
    return out;
}

float gelu_scalar(float x) {
    // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))), the GPT-2 checkpoint variant
    constexpr float kSqrt2OverPi = 0.7978845608028654f;
    const float inner = kSqrt2OverPi * (x + 0.044715f * x * x * x);
    return 0.5f * x * (1.0f + std::tanh(inner));
}

std::vector<float> gelu(std::span<const float> v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = gelu_scalar(v[i]);
    }
    return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine: length mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine: zero-norm input");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace rlens

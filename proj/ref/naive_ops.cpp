#include "naive_ops.hpp"

#include <cmath>

namespace rlens::ref {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (int64_t i = 0; i < a.rows; ++i) {
        for (int64_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < a.cols; ++p) {
                acc += static_cast<double>(a.at(i, p)) * static_cast<double>(b.at(p, j));
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

std::vector<double> naive_softmax(std::span<const float> v, double temperature) {
    std::vector<double> scaled(v.size());
    double max_val = -1e300;
    for (size_t i = 0; i < v.size(); ++i) {
        scaled[i] = static_cast<double>(v[i]) / temperature;
        if (scaled[i] > max_val) max_val = scaled[i];
    }
    double sum = 0.0;
    for (double& x : scaled) {
        x = std::exp(x - max_val);
        sum += x;
    }
    for (double& x : scaled) x /= sum;
    return scaled;
}

std::vector<double> naive_layer_norm(std::span<const float> v, std::span<const float> gain,
                                     std::span<const float> bias, double epsilon) {
    const size_t n = v.size();
    double mean = 0.0;
    for (const float x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const float x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = (v[i] - mean) / std::sqrt(var + epsilon) * gain[i] + bias[i];
    }
    return out;
}

double naive_gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

double naive_cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace rlens::ref

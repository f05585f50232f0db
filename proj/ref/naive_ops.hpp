#pragma once

// Serial reference implementations used by tests and the benchmark. These are
// deliberately plain loops, independent of the production kernels.

#include <span>
#include <vector>

#include "rlens/tensor.hpp"

namespace rlens::ref {

Matrix naive_matmul(const Matrix& a, const Matrix& b);

std::vector<double> naive_softmax(std::span<const float> v, double temperature);

std::vector<double> naive_layer_norm(std::span<const float> v, std::span<const float> gain,
                                     std::span<const float> bias, double epsilon);

double naive_gelu(double x);

double naive_cosine(std::span<const float> a, std::span<const float> b);

}  // namespace rlens::ref

#pragma once

// Straight-line, no-cache forward pass over a whole token sequence. Written
// before the production runtime and kept as its parity oracle: no KV cache,
// full T-by-T attention with an explicit causal mask, nothing shared with the
// production kernels.

#include <span>
#include <vector>

#include "rlens/checkpoint.hpp"

namespace rlens::ref {

struct NaiveForward {
    std::vector<float> logits;                // last position
    std::vector<std::vector<float>> states;   // last position residual, n_layer + 1
};

NaiveForward naive_forward(const CheckpointBundle& bundle, std::span<const int> tokens);

// layer_norm + unembed of a single residual vector, plain loops.
std::vector<float> naive_residual_projection(const CheckpointBundle& bundle,
                                             std::span<const float> e);

}  // namespace rlens::ref

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rlens/checkpoint.hpp"

namespace rlens {

// The last input position's residual embedding before any layer (token
// embedding + positional encoding) and after each of the k layer updates.
struct ResidualTrace {
    std::vector<std::vector<float>> states;         // n_layer + 1 entries
    std::vector<std::vector<float>> layer_updates;  // n_layer entries when instrumented
};

// Per-layer key/value state. Rows [0, n_past) of each matrix are valid.
struct KvCache {
    int n_past = 0;
    std::vector<Matrix> keys;
    std::vector<Matrix> values;

    static KvCache make(const ModelConfig& config);
};

struct ForwardResult {
    std::vector<float> logits;  // final position, length vocab_size
    ResidualTrace trace;
};

struct ForwardOptions {
    bool capture_updates = false;  // record each layer's additive update
};

// Pre-norm GPT-2 block structure with causal masking. `tokens` are appended
// after cache->n_past; pass nullptr for a one-shot pass. Throws on context
// overflow and out-of-range ids.
ForwardResult forward(const CheckpointBundle& bundle, std::span<const int> tokens,
                      KvCache* cache = nullptr, const ForwardOptions& options = {});

enum class SampleMode { greedy, temperature };

struct SamplerConfig {
    uint64_t seed = 0;
    float temperature = 1.0f;
    int max_tokens = 0;
    SampleMode mode = SampleMode::greedy;
};

struct GenerationStep {
    int token_id;          // the emitted token
    ForwardResult result;  // the pass that produced it
};

struct GenerationResult {
    std::vector<GenerationStep> steps;
    bool truncated = false;  // hit n_ctx mid-generation
};

GenerationResult generate(const CheckpointBundle& bundle, std::span<const int> prompt,
                          const SamplerConfig& config);

// argmax with ties broken by lowest token id; this is y-hat regardless of
// sampler mode.
int sampled_token(std::span<const float> logits);
int sampled_token(const ForwardResult& result);

}  // namespace rlens

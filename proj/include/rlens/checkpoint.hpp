#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlens/tensor.hpp"

namespace rlens {

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int n_layer = 0;
    int n_head = 0;
    int n_embd = 0;
    int vocab_size = 0;
    int n_ctx = 0;
    float layer_norm_epsilon = 1e-5f;

    // throws std::invalid_argument on violated invariants
    void validate() const;
};

// Read-only views into a bundle's per-layer tensors. Linear weights are in
// [out_features, in_features] orientation (rows are output features).
struct LayerWeights {
    const Matrix* ln1_gain;
    const Matrix* ln1_bias;
    const Matrix* qkv_weight;  // [3*n_embd, n_embd]
    const Matrix* qkv_bias;    // [1, 3*n_embd]
    const Matrix* proj_weight; // [n_embd, n_embd]
    const Matrix* proj_bias;
    const Matrix* ln2_gain;
    const Matrix* ln2_bias;
    const Matrix* fc_weight;   // [4*n_embd, n_embd]
    const Matrix* fc_bias;
    const Matrix* fc_proj_weight;  // [n_embd, 4*n_embd]
    const Matrix* fc_proj_bias;
};

// Immutable model weights keyed by the canonical GPT-2 tensor names
// (wte.weight, h.{i}.attn.c_attn.weight, ln_f.weight, ...). Conv1D-style
// tensors are kept transposed relative to disk so every linear is a
// rows-are-outputs matmul. The token embedding doubles as the unembedding.
struct CheckpointBundle {
    ModelConfig config;
    std::map<std::string, Matrix> tensors;

    const Matrix& tensor(const std::string& name) const;
    const Matrix& wte() const { return tensor("wte.weight"); }
    const Matrix& wpe() const { return tensor("wpe.weight"); }
    const Matrix& ln_f_gain() const { return tensor("ln_f.weight"); }
    const Matrix& ln_f_bias() const { return tensor("ln_f.bias"); }
    LayerWeights layer(int i) const;
};

// Expected on-disk layout per tensor: shape plus whether disk storage is
// transposed relative to the in-memory orientation.
struct TensorSpec {
    std::string name;
    std::vector<int64_t> disk_shape;
    bool transposed_on_disk;
};

std::vector<TensorSpec> tensor_schema(const ModelConfig& config);

// Full shape/presence validation; throws LoadError naming the offending tensor.
void validate_bundle(const CheckpointBundle& bundle);

// model_dir must hold config.json and model.safetensors. Tensor names may
// carry a "transformer." prefix (stripped); attention mask buffers
// (h.{i}.attn.bias / .masked_bias) are ignored.
CheckpointBundle load_checkpoint(const std::filesystem::path& model_dir);

// Inverse of load_checkpoint: load(write(b)) == b bit-exactly.
void write_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& model_dir);

}  // namespace rlens

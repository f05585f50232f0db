#include "rlens/checkpoint.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "rlens/safetensors.hpp"

namespace rlens {

using nlohmann::json;

void ModelConfig::validate() const {
    if (n_layer < 1 || n_head < 1 || n_embd < 1 || n_ctx < 1) {
        throw std::invalid_argument("ModelConfig: all counts must be >= 1");
    }
    if (vocab_size < 2) {
        throw std::invalid_argument("ModelConfig: vocab_size must be >= 2");
    }
    if (n_embd % n_head != 0) {
        throw std::invalid_argument("ModelConfig: n_embd must be divisible by n_head");
    }
    if (!(layer_norm_epsilon > 0.0f)) {
        throw std::invalid_argument("ModelConfig: layer_norm_epsilon must be positive");
    }
}

const Matrix& CheckpointBundle::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw LoadError("missing tensor '" + name + "'");
    }
    return it->second;
}

LayerWeights CheckpointBundle::layer(int i) const {
    const std::string p = "h." + std::to_string(i) + ".";
    return LayerWeights{
        &tensor(p + "ln_1.weight"),        &tensor(p + "ln_1.bias"),
        &tensor(p + "attn.c_attn.weight"), &tensor(p + "attn.c_attn.bias"),
        &tensor(p + "attn.c_proj.weight"), &tensor(p + "attn.c_proj.bias"),
        &tensor(p + "ln_2.weight"),        &tensor(p + "ln_2.bias"),
        &tensor(p + "mlp.c_fc.weight"),    &tensor(p + "mlp.c_fc.bias"),
        &tensor(p + "mlp.c_proj.weight"),  &tensor(p + "mlp.c_proj.bias"),
    };
}

std::vector<TensorSpec> tensor_schema(const ModelConfig& c) {
    const int64_t e = c.n_embd;
    std::vector<TensorSpec> specs;
    specs.push_back({"wte.weight", {c.vocab_size, e}, false});
    specs.push_back({"wpe.weight", {c.n_ctx, e}, false});
    for (int i = 0; i < c.n_layer; ++i) {
        const std::string p = "h." + std::to_string(i) + ".";
        specs.push_back({p + "ln_1.weight", {e}, false});
        specs.push_back({p + "ln_1.bias", {e}, false});
        specs.push_back({p + "attn.c_attn.weight", {e, 3 * e}, true});
        specs.push_back({p + "attn.c_attn.bias", {3 * e}, false});
        specs.push_back({p + "attn.c_proj.weight", {e, e}, true});
        specs.push_back({p + "attn.c_proj.bias", {e}, false});
        specs.push_back({p + "ln_2.weight", {e}, false});
        specs.push_back({p + "ln_2.bias", {e}, false});
        specs.push_back({p + "mlp.c_fc.weight", {e, 4 * e}, true});
        specs.push_back({p + "mlp.c_fc.bias", {4 * e}, false});
        specs.push_back({p + "mlp.c_proj.weight", {4 * e, e}, true});
        specs.push_back({p + "mlp.c_proj.bias", {e}, false});
    }
    specs.push_back({"ln_f.weight", {e}, false});
    specs.push_back({"ln_f.bias", {e}, false});
    return specs;
}

namespace {

// In-memory orientation for a schema entry: transposed entries flip to
// [out, in]; 1-D entries become a single row.
std::pair<int64_t, int64_t> memory_shape(const TensorSpec& spec) {
    if (spec.disk_shape.size() == 1) {
        return {1, spec.disk_shape[0]};
    }
    if (spec.transposed_on_disk) {
        return {spec.disk_shape[1], spec.disk_shape[0]};
    }
    return {spec.disk_shape[0], spec.disk_shape[1]};
}

std::string shape_str(int64_t r, int64_t c) {
    return "[" + std::to_string(r) + "," + std::to_string(c) + "]";
}

// Buffers present in some published checkpoints that carry no weights. Note
// ".attn.bias" is the causal-mask buffer; ".attn.c_attn.bias" is a weight.
bool is_ignorable(const std::string& name) {
    return (name.ends_with(".attn.bias") && !name.ends_with(".c_attn.bias")) ||
           name.ends_with(".attn.masked_bias") || name == "lm_head.weight";
}

}  // namespace

void validate_bundle(const CheckpointBundle& bundle) {
    bundle.config.validate();
    if (bundle.tensors.empty()) {
        throw LoadError("bundle has an empty tensor map");
    }
    std::set<std::string> seen;
    for (const TensorSpec& spec : tensor_schema(bundle.config)) {
        auto it = bundle.tensors.find(spec.name);
        if (it == bundle.tensors.end()) {
            throw LoadError("missing tensor '" + spec.name + "'");
        }
        const auto [r, c] = memory_shape(spec);
        if (it->second.rows != r || it->second.cols != c) {
            throw LoadError("shape mismatch for tensor '" + spec.name + "': expected " +
                            shape_str(r, c) + ", got " +
                            shape_str(it->second.rows, it->second.cols));
        }
        seen.insert(spec.name);
    }
    for (const auto& [name, t] : bundle.tensors) {
        if (!seen.count(name)) {
            throw LoadError("unexpected tensor '" + name + "'");
        }
    }
}

namespace {

ModelConfig read_config_json(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw LoadError("cannot open " + file.string());
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw LoadError("malformed JSON in " + file.string());
    }
    ModelConfig c;
    auto require_int = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_number_integer()) {
            throw LoadError(std::string("config.json: missing integer key '") + key + "'");
        }
        return j[key].get<int>();
    };
    c.n_layer = require_int("n_layer");
    c.n_head = require_int("n_head");
    c.n_embd = require_int("n_embd");
    c.vocab_size = require_int("vocab_size");
    if (j.contains("n_ctx")) {
        c.n_ctx = j["n_ctx"].get<int>();
    } else if (j.contains("n_positions")) {
        c.n_ctx = j["n_positions"].get<int>();
    } else {
        throw LoadError("config.json: missing key 'n_ctx' (or alias 'n_positions')");
    }
    c.layer_norm_epsilon =
        j.contains("layer_norm_epsilon") ? j["layer_norm_epsilon"].get<float>() : 1e-5f;
    c.validate();
    return c;
}

Matrix to_matrix(const RawTensor& raw, const TensorSpec& spec) {
    const auto [r, c] = memory_shape(spec);
    Matrix m(r, c);
    if (spec.transposed_on_disk) {
        // disk [in, out] -> memory [out, in]
        const int64_t in = spec.disk_shape[0], out = spec.disk_shape[1];
        for (int64_t i = 0; i < in; ++i) {
            for (int64_t o = 0; o < out; ++o) {
                m.data[o * in + i] = raw.data[i * out + o];
            }
        }
    } else {
        m.data = raw.data;
    }
    return m;
}

RawTensor to_raw(const Matrix& m, const TensorSpec& spec) {
    RawTensor raw;
    raw.shape = spec.disk_shape;
    raw.data.resize(m.data.size());
    if (spec.transposed_on_disk) {
        const int64_t in = spec.disk_shape[0], out = spec.disk_shape[1];
        for (int64_t o = 0; o < out; ++o) {
            for (int64_t i = 0; i < in; ++i) {
                raw.data[i * out + o] = m.data[o * in + i];
            }
        }
    } else {
        raw.data = m.data;
    }
    return raw;
}

}  // namespace

CheckpointBundle load_checkpoint(const std::filesystem::path& model_dir) {
    CheckpointBundle bundle;
    bundle.config = read_config_json(model_dir / "config.json");

    auto raw = read_safetensors(model_dir / "model.safetensors");

    // Normalize the "transformer." prefix some exporters use.
    std::map<std::string, RawTensor> named;
    for (auto& [name, t] : raw) {
        std::string canonical = name;
        if (canonical.starts_with("transformer.")) {
            canonical = canonical.substr(std::string("transformer.").size());
        }
        if (is_ignorable(canonical)) continue;
        named.emplace(std::move(canonical), std::move(t));
    }

    for (const TensorSpec& spec : tensor_schema(bundle.config)) {
        auto it = named.find(spec.name);
        if (it == named.end()) {
            throw LoadError("missing tensor '" + spec.name + "'");
        }
        if (it->second.shape != spec.disk_shape) {
            std::string got = "[";
            for (size_t i = 0; i < it->second.shape.size(); ++i) {
                got += (i ? "," : "") + std::to_string(it->second.shape[i]);
            }
            got += "]";
            std::string want = "[";
            for (size_t i = 0; i < spec.disk_shape.size(); ++i) {
                want += (i ? "," : "") + std::to_string(spec.disk_shape[i]);
            }
            want += "]";
            throw LoadError("shape mismatch for tensor '" + spec.name + "': expected " + want +
                            ", got " + got);
        }
        bundle.tensors.emplace(spec.name, to_matrix(it->second, spec));
        named.erase(it);
    }
    if (!named.empty()) {
        throw LoadError("unexpected tensor '" + named.begin()->first + "'");
    }

    validate_bundle(bundle);
    return bundle;
}

void write_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& model_dir) {
    validate_bundle(bundle);
    std::filesystem::create_directories(model_dir);

    json cfg = {
        {"n_layer", bundle.config.n_layer},
        {"n_head", bundle.config.n_head},
        {"n_embd", bundle.config.n_embd},
        {"vocab_size", bundle.config.vocab_size},
        {"n_ctx", bundle.config.n_ctx},
        {"n_positions", bundle.config.n_ctx},
        {"layer_norm_epsilon", bundle.config.layer_norm_epsilon},
    };
    std::ofstream cfg_out(model_dir / "config.json", std::ios::trunc);
    if (!cfg_out) {
        throw std::runtime_error("cannot write " + (model_dir / "config.json").string());
    }
    cfg_out << cfg.dump(2) << "\n";

    std::map<std::string, RawTensor> raw;
    for (const TensorSpec& spec : tensor_schema(bundle.config)) {
        raw.emplace(spec.name, to_raw(bundle.tensors.at(spec.name), spec));
    }
    write_safetensors(model_dir / "model.safetensors", raw);
}

}  // namespace rlens

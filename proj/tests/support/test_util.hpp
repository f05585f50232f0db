#pragma once

// Shared fixtures for the test and acceptance binaries.

#include <unistd.h>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlens/bpe.hpp"
#include "rlens/checkpoint.hpp"

namespace rlens::test {

inline std::filesystem::path source_root() {
#ifdef RLENS_SOURCE_DIR
    return std::filesystem::path(RLENS_SOURCE_DIR);
#else
    return std::filesystem::current_path();
#endif
}

inline std::filesystem::path gpt2_vocab_dir() { return source_root() / "data" / "gpt2_vocab"; }

// Loaded once; the real 50257-entry vocabulary.
inline const BpeVocab& gpt2_vocab() {
    static const BpeVocab vocab = BpeVocab::load_dir(gpt2_vocab_dir());
    return vocab;
}

class TempDir {
  public:
    TempDir() {
        auto pattern = (std::filesystem::temp_directory_path() / "rlens_test_XXXXXX").string();
        if (!mkdtemp(pattern.data())) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

// Seeded random GPT-2-family bundle; layer-norm gains near 1 keep the
// activations sane.
inline CheckpointBundle make_tiny_bundle(uint64_t seed, int n_layer = 2, int n_embd = 8,
                                         int n_head = 2, int vocab_size = 16, int n_ctx = 64) {
    CheckpointBundle bundle;
    bundle.config = ModelConfig{n_layer, n_head, n_embd, vocab_size, n_ctx, 1e-5f};
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> weight(0.0f, 0.15f);
    std::normal_distribution<float> embed(0.0f, 0.1f);
    std::normal_distribution<float> bias(0.0f, 0.02f);
    std::normal_distribution<float> ln_gain(1.0f, 0.05f);

    for (const TensorSpec& spec : tensor_schema(bundle.config)) {
        int64_t rows = 1, cols = spec.disk_shape[0];
        if (spec.disk_shape.size() == 2) {
            rows = spec.transposed_on_disk ? spec.disk_shape[1] : spec.disk_shape[0];
            cols = spec.transposed_on_disk ? spec.disk_shape[0] : spec.disk_shape[1];
        }
        Matrix m(rows, cols);
        const bool is_ln_gain = spec.name.find("ln_") != std::string::npos &&
                                spec.name.ends_with(".weight");
        const bool is_bias = spec.name.ends_with(".bias");
        const bool is_embed = spec.name == "wte.weight" || spec.name == "wpe.weight";
        for (float& v : m.data) {
            if (is_ln_gain) {
                v = ln_gain(rng);
            } else if (is_bias) {
                v = bias(rng);
            } else if (is_embed) {
                v = embed(rng);
            } else {
                v = weight(rng);
            }
        }
        bundle.tensors.emplace(spec.name, std::move(m));
    }
    return bundle;
}

// Minimal byte-closure vocabulary: the 256 byte tokens plus three merges.
// Targets ending in "t" stay single-token through the "Ġ t" merge.
inline void write_toy_vocab(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    // Byte encoder built exactly as BpeVocab::load does.
    std::array<std::string, 256> byte_tok;
    {
        std::array<bool, 256> direct{};
        for (int b = 33; b <= 126; ++b) direct[b] = true;
        for (int b = 161; b <= 172; ++b) direct[b] = true;
        for (int b = 174; b <= 255; ++b) direct[b] = true;
        uint32_t n = 0;
        for (int b = 0; b < 256; ++b) {
            const uint32_t cp = direct[b] ? static_cast<uint32_t>(b) : 256 + n++;
            std::string s;
            if (cp < 0x80) {
                s += static_cast<char>(cp);
            } else {
                s += static_cast<char>(0xC0 | (cp >> 6));
                s += static_cast<char>(0x80 | (cp & 0x3F));
            }
            byte_tok[b] = s;
        }
    }

    const std::string space_tok = byte_tok[' '];  // "Ġ"

    std::ofstream vocab(dir / "vocab.json", std::ios::trunc);
    vocab << "{";
    for (int b = 0; b < 256; ++b) {
        if (b) vocab << ",";
        vocab << nlohmann::json(byte_tok[b]).dump() << ":" << b;
    }
    vocab << "," << nlohmann::json(space_tok + "t").dump() << ":256";
    vocab << ",\"he\":257";
    vocab << ",\"th\":258";
    vocab << "}";
    vocab.close();

    std::ofstream merges(dir / "merges.txt", std::ios::trunc);
    merges << "#version: 0.2\n";
    merges << space_tok << " t\n";
    merges << "h e\n";
    merges << "t h\n";
}

// Toy-vocab-sized model plus matching tokenizer files in one directory, for
// CLI-level tests.
inline void write_toy_model_dir(const std::filesystem::path& dir, uint64_t seed, int n_layer = 2,
                                int n_embd = 8, int n_head = 2, int n_ctx = 64) {
    const CheckpointBundle bundle = make_tiny_bundle(seed, n_layer, n_embd, n_head, 259, n_ctx);
    write_checkpoint(bundle, dir);
    write_toy_vocab(dir);
}

inline uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (const char c : bytes) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + p.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace rlens::test

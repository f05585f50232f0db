#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "rlens/checkpoint.hpp"
#include "rlens/safetensors.hpp"
#include "test_util.hpp"

using namespace rlens;
using rlens::test::TempDir;

namespace {

bool bundles_equal(const CheckpointBundle& a, const CheckpointBundle& b) {
    if (a.config.n_layer != b.config.n_layer || a.config.n_head != b.config.n_head ||
        a.config.n_embd != b.config.n_embd || a.config.vocab_size != b.config.vocab_size ||
        a.config.n_ctx != b.config.n_ctx ||
        a.config.layer_norm_epsilon != b.config.layer_norm_epsilon) {
        return false;
    }
    return a.tensors == b.tensors;  // bit-exact float compare via vector==
}

}  // namespace

TEST_CASE("tiny synthetic checkpoint round-trips bit-exactly") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(42);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    const CheckpointBundle loaded = load_checkpoint(dir.path());
    CHECK(bundles_equal(bundle, loaded));
}

TEST_CASE("missing final layer-norm gain is named in the error") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(1);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    auto raw = read_safetensors(dir.path() / "model.safetensors");
    raw.erase("ln_f.weight");
    write_safetensors(dir.path() / "model.safetensors", raw);
    try {
        load_checkpoint(dir.path());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("ln_f.weight") != std::string::npos);
    }
}

TEST_CASE("shape mismatch is named in the error") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(2);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    auto raw = read_safetensors(dir.path() / "model.safetensors");
    raw["wpe.weight"].shape = {raw["wpe.weight"].shape[1], raw["wpe.weight"].shape[0]};
    write_safetensors(dir.path() / "model.safetensors", raw);
    try {
        load_checkpoint(dir.path());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("wpe.weight") != std::string::npos);
        CHECK(msg.find("shape mismatch") != std::string::npos);
    }
}

TEST_CASE("unexpected tensor is rejected by name") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(3);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    auto raw = read_safetensors(dir.path() / "model.safetensors");
    RawTensor extra;
    extra.shape = {2};
    extra.data = {1.0f, 2.0f};
    raw.emplace("h.0.surprise", extra);
    write_safetensors(dir.path() / "model.safetensors", raw);
    try {
        load_checkpoint(dir.path());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("h.0.surprise") != std::string::npos);
    }
}

TEST_CASE("transformer. prefix and attention mask buffers are tolerated") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(4);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    auto raw = read_safetensors(dir.path() / "model.safetensors");
    std::map<std::string, RawTensor> prefixed;
    for (auto& [name, t] : raw) {
        prefixed.emplace("transformer." + name, std::move(t));
    }
    RawTensor mask;
    mask.shape = {1, 1, 4, 4};
    mask.data.assign(16, 1.0f);
    prefixed.emplace("transformer.h.0.attn.bias", std::move(mask));
    write_safetensors(dir.path() / "model.safetensors", prefixed);
    const CheckpointBundle loaded = load_checkpoint(dir.path());
    CHECK(bundles_equal(bundle, loaded));
}

TEST_CASE("empty tensor map fails validation") {
    CheckpointBundle bundle;
    bundle.config = ModelConfig{1, 1, 4, 4, 8, 1e-5f};
    CHECK_THROWS_AS(validate_bundle(bundle), LoadError);
    TempDir dir;
    CHECK_THROWS_AS(write_safetensors(dir.path() / "x.safetensors", {}), std::invalid_argument);
}

TEST_CASE("config aliases and defaults") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(5);
    TempDir dir;
    write_checkpoint(bundle, dir.path());
    // Rewrite config.json using the published alias and no epsilon.
    nlohmann::json cfg = {
        {"n_layer", bundle.config.n_layer}, {"n_head", bundle.config.n_head},
        {"n_embd", bundle.config.n_embd},   {"vocab_size", bundle.config.vocab_size},
        {"n_positions", bundle.config.n_ctx},
    };
    std::ofstream(dir.path() / "config.json", std::ios::trunc) << cfg.dump();
    const CheckpointBundle loaded = load_checkpoint(dir.path());
    CHECK(loaded.config.n_ctx == bundle.config.n_ctx);
    CHECK(loaded.config.layer_norm_epsilon == 1e-5f);
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig c{2, 3, 8, 16, 64, 1e-5f};  // 8 % 3 != 0
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ModelConfig{0, 2, 8, 16, 64, 1e-5f};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ModelConfig{2, 2, 8, 1, 64, 1e-5f};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("seeded tiny bundle writes a stable file digest") {
    TempDir a, b;
    write_checkpoint(rlens::test::make_tiny_bundle(77), a.path());
    write_checkpoint(rlens::test::make_tiny_bundle(77), b.path());
    const std::string bytes_a = rlens::test::read_file_bytes(a.path() / "model.safetensors");
    const std::string bytes_b = rlens::test::read_file_bytes(b.path() / "model.safetensors");
    REQUIRE(bytes_a == bytes_b);
    // digest recorded on first run
    CHECK(rlens::test::fnv1a64(bytes_a) == 0x57b73155022505deull);
}

TEST_CASE("layer accessor exposes every block tensor") {
    const CheckpointBundle bundle = rlens::test::make_tiny_bundle(6);
    const LayerWeights w = bundle.layer(1);
    CHECK(w.qkv_weight->rows == 3 * bundle.config.n_embd);
    CHECK(w.qkv_weight->cols == bundle.config.n_embd);
    CHECK(w.fc_weight->rows == 4 * bundle.config.n_embd);
    CHECK(w.fc_proj_weight->cols == 4 * bundle.config.n_embd);
    CHECK_THROWS_AS(bundle.tensor("h.9.ln_1.weight"), LoadError);
}

TEST_CASE("GPT-2 small checkpoint layout loads when present") {
    const auto dir = rlens::test::source_root() / "models" / "gpt2-small-rand";
    if (!std::filesystem::exists(dir / "model.safetensors")) {
        MESSAGE("models/gpt2-small-rand not generated; skipping");
        return;
    }
    const CheckpointBundle bundle = load_checkpoint(dir);
    CHECK(bundle.config.n_layer == 12);
    CHECK(bundle.config.n_embd == 768);
    CHECK(bundle.config.vocab_size == 50257);
    // 12 tensors per layer group plus embeddings and the final norm
    CHECK(bundle.tensors.size() == 12u * 12u + 4u);
    CHECK(bundle.layer(11).fc_proj_bias->cols == 768);
}

// Compares the OpenMP kernels against the serial reference implementations,
// plus a cached-vs-naive forward pass on a small model.

#include <benchmark/benchmark.h>

#include <random>

#include "naive_forward.hpp"
#include "naive_ops.hpp"
#include "rlens/runtime.hpp"
#include "rlens/tensor.hpp"

using namespace rlens;

namespace {

Matrix random_matrix(int64_t r, int64_t c, uint64_t seed) {
    std::mt19937 rng(static_cast<uint32_t>(seed));
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Matrix m(r, c);
    for (float& v : m.data) v = dist(rng);
    return m;
}

CheckpointBundle bench_bundle() {
    // 4-layer, 128-wide model; big enough that the kernels dominate.
    CheckpointBundle bundle;
    bundle.config = ModelConfig{4, 4, 128, 512, 256, 1e-5f};
    std::mt19937 rng(7);
    std::normal_distribution<float> weight(0.0f, 0.1f);
    for (const TensorSpec& spec : tensor_schema(bundle.config)) {
        int64_t rows = 1, cols = spec.disk_shape[0];
        if (spec.disk_shape.size() == 2) {
            rows = spec.transposed_on_disk ? spec.disk_shape[1] : spec.disk_shape[0];
            cols = spec.transposed_on_disk ? spec.disk_shape[0] : spec.disk_shape[1];
        }
        Matrix m(rows, cols);
        const bool ln_gain =
            spec.name.find("ln_") != std::string::npos && spec.name.ends_with(".weight");
        for (float& v : m.data) v = ln_gain ? 1.0f : weight(rng);
        bundle.tensors.emplace(spec.name, std::move(m));
    }
    return bundle;
}

void bm_matmul_omp(benchmark::State& state) {
    const auto n = state.range(0);
    const Matrix a = random_matrix(n, n, 1);
    const Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) {
        Matrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
}

void bm_matmul_serial_ref(benchmark::State& state) {
    const auto n = state.range(0);
    const Matrix a = random_matrix(n, n, 1);
    const Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) {
        Matrix c = ref::naive_matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
}

void bm_softmax_omp_path(benchmark::State& state) {
    const Matrix v = random_matrix(1, state.range(0), 3);
    for (auto _ : state) {
        auto p = softmax(v.row(0), 0.8f);
        benchmark::DoNotOptimize(p.data());
    }
}

void bm_softmax_serial_ref(benchmark::State& state) {
    const Matrix v = random_matrix(1, state.range(0), 3);
    for (auto _ : state) {
        auto p = ref::naive_softmax(v.row(0), 0.8);
        benchmark::DoNotOptimize(p.data());
    }
}

void bm_layer_norm(benchmark::State& state) {
    const Matrix v = random_matrix(1, state.range(0), 4);
    const std::vector<float> gain(state.range(0), 1.0f), bias(state.range(0), 0.0f);
    for (auto _ : state) {
        auto out = layer_norm(v.row(0), gain, bias, 1e-5f);
        benchmark::DoNotOptimize(out.data());
    }
}

void bm_forward_cached(benchmark::State& state) {
    const CheckpointBundle bundle = bench_bundle();
    const auto len = static_cast<int>(state.range(0));
    std::vector<int> tokens(len);
    for (int i = 0; i < len; ++i) tokens[i] = (i * 37) % bundle.config.vocab_size;
    for (auto _ : state) {
        KvCache cache = KvCache::make(bundle.config);
        ForwardResult fr = forward(bundle, std::span(tokens).first(1), &cache);
        for (int t = 1; t < len; ++t) {
            fr = forward(bundle, std::span(tokens).subspan(t, 1), &cache);
        }
        benchmark::DoNotOptimize(fr.logits.data());
    }
}

void bm_forward_naive_ref(benchmark::State& state) {
    const CheckpointBundle bundle = bench_bundle();
    const auto len = static_cast<int>(state.range(0));
    std::vector<int> tokens(len);
    for (int i = 0; i < len; ++i) tokens[i] = (i * 37) % bundle.config.vocab_size;
    for (auto _ : state) {
        // Re-runs the whole prefix at every step, as a cacheless decoder would.
        ref::NaiveForward nf;
        for (int t = 1; t <= len; ++t) {
            nf = ref::naive_forward(bundle, std::span(tokens).first(t));
        }
        benchmark::DoNotOptimize(nf.logits.data());
    }
}

}  // namespace

BENCHMARK(bm_matmul_omp)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_matmul_serial_ref)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_softmax_omp_path)->Arg(50257);
BENCHMARK(bm_softmax_serial_ref)->Arg(50257);
BENCHMARK(bm_layer_norm)->Arg(768)->Arg(1600);
BENCHMARK(bm_forward_cached)->Arg(32)->Arg(64);
BENCHMARK(bm_forward_naive_ref)->Arg(32)->Arg(64);

BENCHMARK_MAIN();

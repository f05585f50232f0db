#include "rlens/runtime.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "rlens/lens.hpp"
#include "rlens/tensor.hpp"

namespace rlens {

KvCache KvCache::make(const ModelConfig& config) {
    KvCache cache;
    cache.keys.reserve(config.n_layer);
    cache.values.reserve(config.n_layer);
    for (int i = 0; i < config.n_layer; ++i) {
        cache.keys.emplace_back(config.n_ctx, config.n_embd);
        cache.values.emplace_back(config.n_ctx, config.n_embd);
    }
    return cache;
}

namespace {

// x [T,in] times w [out,in] plus bias [1,out].
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
    Matrix y = matmul_nt(x, w);
    for (int64_t t = 0; t < y.rows; ++t) {
        for (int64_t j = 0; j < y.cols; ++j) {
            y.data[t * y.cols + j] += b.data[j];
        }
    }
    return y;
}

void layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& bias, float eps,
                     Matrix& out) {
    for (int64_t t = 0; t < x.rows; ++t) {
        const std::vector<float> r = layer_norm(x.row(t), gain.row(0), bias.row(0), eps);
        std::copy(r.begin(), r.end(), out.row(t).begin());
    }
}

}  // namespace

ForwardResult forward(const CheckpointBundle& bundle, std::span<const int> tokens, KvCache* cache,
                      const ForwardOptions& options) {
    const ModelConfig& cfg = bundle.config;
    if (tokens.empty()) {
        throw std::invalid_argument("forward: empty token sequence");
    }
    KvCache local;
    if (cache == nullptr) {
        local = KvCache::make(cfg);
        cache = &local;
    }
    const int n_past = cache->n_past;
    const auto t_new = static_cast<int>(tokens.size());
    if (n_past + t_new > cfg.n_ctx) {
        throw std::invalid_argument("forward: context overflow (" + std::to_string(n_past + t_new) +
                                    " > " + std::to_string(cfg.n_ctx) + ")");
    }
    for (const int id : tokens) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                        " out of range");
        }
    }

    const Matrix& wte = bundle.wte();
    const Matrix& wpe = bundle.wpe();
    const int64_t e = cfg.n_embd;
    const int n_head = cfg.n_head;
    const int64_t head_dim = e / n_head;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Matrix x(t_new, e);
    for (int t = 0; t < t_new; ++t) {
        const auto wte_row = wte.row(tokens[t]);
        const auto wpe_row = wpe.row(n_past + t);
        auto out = x.row(t);
        for (int64_t j = 0; j < e; ++j) {
            out[j] = wte_row[j] + wpe_row[j];
        }
    }

    ForwardResult result;
    auto& trace = result.trace;
    trace.states.reserve(cfg.n_layer + 1);
    trace.states.emplace_back(x.row(t_new - 1).begin(), x.row(t_new - 1).end());

    Matrix normed(t_new, e);
    for (int layer = 0; layer < cfg.n_layer; ++layer) {
        const LayerWeights w = bundle.layer(layer);

        layer_norm_rows(x, *w.ln1_gain, *w.ln1_bias, cfg.layer_norm_epsilon, normed);
        const Matrix qkv = linear(normed, *w.qkv_weight, *w.qkv_bias);  // [T, 3e]

        Matrix& key_cache = cache->keys[layer];
        Matrix& value_cache = cache->values[layer];
        for (int t = 0; t < t_new; ++t) {
            const float* src = qkv.data.data() + t * 3 * e;
            std::copy(src + e, src + 2 * e, key_cache.row(n_past + t).begin());
            std::copy(src + 2 * e, src + 3 * e, value_cache.row(n_past + t).begin());
        }

        Matrix attn(t_new, e);
#pragma omp parallel for collapse(2) schedule(static) if (t_new * n_head > 8)
        for (int h = 0; h < n_head; ++h) {
            for (int t = 0; t < t_new; ++t) {
                const int64_t off = h * head_dim;
                const float* q = qkv.data.data() + t * 3 * e + off;
                const int kv_len = n_past + t + 1;  // causal: only positions <= t

                std::vector<double> scores(kv_len);
                double max_score = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < kv_len; ++j) {
                    const float* k = key_cache.data.data() + j * e + off;
                    double dot = 0.0;
                    for (int64_t d = 0; d < head_dim; ++d) {
                        dot += static_cast<double>(q[d]) * k[d];
                    }
                    scores[j] = dot * scale;
                    if (scores[j] > max_score) max_score = scores[j];
                }
                double sum = 0.0;
                for (int j = 0; j < kv_len; ++j) {
                    scores[j] = std::exp(scores[j] - max_score);
                    sum += scores[j];
                }
                const double inv = 1.0 / sum;
                float* out = attn.data.data() + t * e + off;
                for (int64_t d = 0; d < head_dim; ++d) {
                    double acc = 0.0;
                    for (int j = 0; j < kv_len; ++j) {
                        acc += scores[j] * value_cache.data[j * e + off + d];
                    }
                    out[d] = static_cast<float>(acc * inv);
                }
            }
        }

        const Matrix attn_out = linear(attn, *w.proj_weight, *w.proj_bias);
        for (size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] += attn_out.data[i];
        }

        layer_norm_rows(x, *w.ln2_gain, *w.ln2_bias, cfg.layer_norm_epsilon, normed);
        Matrix fc = linear(normed, *w.fc_weight, *w.fc_bias);
        for (float& v : fc.data) {
            v = gelu_scalar(v);
        }
        const Matrix mlp_out = linear(fc, *w.fc_proj_weight, *w.fc_proj_bias);
        for (size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] += mlp_out.data[i];
        }

        trace.states.emplace_back(x.row(t_new - 1).begin(), x.row(t_new - 1).end());
        if (options.capture_updates) {
            std::vector<float> update(e);
            const auto a = attn_out.row(t_new - 1);
            const auto m = mlp_out.row(t_new - 1);
            for (int64_t j = 0; j < e; ++j) {
                update[j] = a[j] + m[j];
            }
            trace.layer_updates.push_back(std::move(update));
        }
    }

    cache->n_past = n_past + t_new;
    result.logits = residual_prediction(bundle, trace.states.back());
    return result;
}

int sampled_token(std::span<const float> logits) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    }
    return best;
}

int sampled_token(const ForwardResult& result) { return sampled_token(result.logits); }

namespace {

// 53-bit uniform in [0,1); pinned construction so streams are portable.
double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_from(std::span<const float> logits, float temperature, std::mt19937_64& rng) {
    const std::vector<float> probs = softmax(logits, temperature);
    const double r = next_uniform(rng);
    double cum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (r < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

GenerationResult generate(const CheckpointBundle& bundle, std::span<const int> prompt,
                          const SamplerConfig& config) {
    if (prompt.empty()) {
        throw std::invalid_argument("generate: empty prompt");
    }
    if (config.mode == SampleMode::temperature && !(config.temperature > 0.0f)) {
        throw std::invalid_argument("generate: temperature must be positive");
    }
    GenerationResult out;
    if (config.max_tokens <= 0) {
        return out;
    }

    std::mt19937_64 rng(config.seed);
    KvCache cache = KvCache::make(bundle.config);
    ForwardResult fr = forward(bundle, prompt, &cache);
    for (int step = 0; step < config.max_tokens; ++step) {
        const int next = config.mode == SampleMode::greedy
                             ? sampled_token(fr.logits)
                             : sample_from(fr.logits, config.temperature, rng);
        out.steps.push_back(GenerationStep{next, std::move(fr)});
        if (step + 1 == config.max_tokens) break;
        if (cache.n_past + 1 > bundle.config.n_ctx) {
            out.truncated = true;
            break;
        }
        const int next_span[1] = {next};
        fr = forward(bundle, next_span, &cache);
    }
    return out;
}

}  // namespace rlens

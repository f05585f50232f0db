#include "naive_forward.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlens::ref {

namespace {

using Vec = std::vector<float>;
using Mat = std::vector<Vec>;  // [T][width]

Vec ln(const Vec& x, const Matrix& gain, const Matrix& bias, float eps) {
    const size_t n = x.size();
    double mean = 0.0;
    for (const float v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const float v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    Vec out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>((x[i] - mean) * inv) * gain.data[i] + bias.data[i];
    }
    return out;
}

// y = W x + b with W rows as output features.
Vec affine(const Matrix& w, const Matrix& b, const Vec& x) {
    Vec y(w.rows);
    for (int64_t o = 0; o < w.rows; ++o) {
        double acc = b.data[o];
        for (int64_t i = 0; i < w.cols; ++i) {
            acc += static_cast<double>(w.data[o * w.cols + i]) * x[i];
        }
        y[o] = static_cast<float>(acc);
    }
    return y;
}

}  // namespace

std::vector<float> naive_residual_projection(const CheckpointBundle& bundle,
                                             std::span<const float> e) {
    const Vec x(e.begin(), e.end());
    const Vec normed = ln(x, bundle.ln_f_gain(), bundle.ln_f_bias(),
                          bundle.config.layer_norm_epsilon);
    const Matrix& wte = bundle.wte();
    Vec logits(bundle.config.vocab_size);
    for (int64_t v = 0; v < wte.rows; ++v) {
        double acc = 0.0;
        for (int64_t i = 0; i < wte.cols; ++i) {
            acc += static_cast<double>(wte.data[v * wte.cols + i]) * normed[i];
        }
        logits[v] = static_cast<float>(acc);
    }
    return logits;
}

NaiveForward naive_forward(const CheckpointBundle& bundle, std::span<const int> tokens) {
    const ModelConfig& cfg = bundle.config;
    const auto t_len = static_cast<int64_t>(tokens.size());
    if (t_len == 0 || t_len > cfg.n_ctx) {
        throw std::invalid_argument("naive_forward: bad sequence length");
    }
    const int64_t e = cfg.n_embd;
    const int64_t head_dim = e / cfg.n_head;

    Mat x(t_len, Vec(e));
    for (int64_t t = 0; t < t_len; ++t) {
        for (int64_t j = 0; j < e; ++j) {
            x[t][j] = bundle.wte().at(tokens[t], j) + bundle.wpe().at(t, j);
        }
    }

    NaiveForward out;
    out.states.push_back(x[t_len - 1]);

    for (int layer = 0; layer < cfg.n_layer; ++layer) {
        const LayerWeights w = bundle.layer(layer);

        Mat qkv(t_len);
        for (int64_t t = 0; t < t_len; ++t) {
            qkv[t] = affine(*w.qkv_weight, *w.qkv_bias,
                            ln(x[t], *w.ln1_gain, *w.ln1_bias, cfg.layer_norm_epsilon));
        }

        Mat attn(t_len, Vec(e));
        for (int h = 0; h < cfg.n_head; ++h) {
            const int64_t off = h * head_dim;
            for (int64_t tq = 0; tq < t_len; ++tq) {
                // full score row with additive -inf mask on future positions
                std::vector<double> scores(t_len);
                for (int64_t tk = 0; tk < t_len; ++tk) {
                    if (tk > tq) {
                        scores[tk] = -std::numeric_limits<double>::infinity();
                        continue;
                    }
                    double dot = 0.0;
                    for (int64_t d = 0; d < head_dim; ++d) {
                        dot += static_cast<double>(qkv[tq][off + d]) * qkv[tk][e + off + d];
                    }
                    scores[tk] = dot / std::sqrt(static_cast<double>(head_dim));
                }
                double max_s = -std::numeric_limits<double>::infinity();
                for (const double s : scores) {
                    if (s > max_s) max_s = s;
                }
                double sum = 0.0;
                for (double& s : scores) {
                    s = std::exp(s - max_s);
                    sum += s;
                }
                for (int64_t d = 0; d < head_dim; ++d) {
                    double acc = 0.0;
                    for (int64_t tk = 0; tk <= tq; ++tk) {
                        acc += scores[tk] * qkv[tk][2 * e + off + d];
                    }
                    attn[tq][off + d] = static_cast<float>(acc / sum);
                }
            }
        }

        for (int64_t t = 0; t < t_len; ++t) {
            const Vec proj = affine(*w.proj_weight, *w.proj_bias, attn[t]);
            for (int64_t j = 0; j < e; ++j) x[t][j] += proj[j];
        }

        for (int64_t t = 0; t < t_len; ++t) {
            Vec h = affine(*w.fc_weight, *w.fc_bias,
                           ln(x[t], *w.ln2_gain, *w.ln2_bias, cfg.layer_norm_epsilon));
            for (float& v : h) {
                const double xv = v;
                v = static_cast<float>(
                    0.5 * xv * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (xv + 0.044715 * xv * xv * xv))));
            }
            const Vec proj = affine(*w.fc_proj_weight, *w.fc_proj_bias, h);
            for (int64_t j = 0; j < e; ++j) x[t][j] += proj[j];
        }

        out.states.push_back(x[t_len - 1]);
    }

    out.logits = naive_residual_projection(bundle, x[t_len - 1]);
    return out;
}

}  // namespace rlens::ref

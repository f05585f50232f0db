#include "rlens/lens.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rlens/tensor.hpp"

namespace rlens {

namespace {

double log_sum_exp(std::span<const float> logits) {
    double max_val = -std::numeric_limits<double>::infinity();
    for (const float l : logits) {
        if (l > max_val) max_val = l;
    }
    double sum = 0.0;
    for (const float l : logits) {
        sum += std::exp(static_cast<double>(l) - max_val);
    }
    return max_val + std::log(sum);
}

}  // namespace

std::vector<float> residual_prediction(const CheckpointBundle& bundle, std::span<const float> e) {
    const ModelConfig& cfg = bundle.config;
    if (static_cast<int64_t>(e.size()) != cfg.n_embd) {
        throw std::invalid_argument("residual_prediction: expected width " +
                                    std::to_string(cfg.n_embd) + ", got " +
                                    std::to_string(e.size()));
    }
    Matrix state(1, cfg.n_embd);
    const std::vector<float> normed = layer_norm(e, bundle.ln_f_gain().row(0),
                                                 bundle.ln_f_bias().row(0),
                                                 cfg.layer_norm_epsilon);
    std::copy(normed.begin(), normed.end(), state.row(0).begin());
    Matrix logits = matmul_nt(state, bundle.wte());
    return std::move(logits.data);
}

double cross_entropy_onehot(std::span<const float> logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("cross_entropy_onehot: target out of range");
    }
    return log_sum_exp(logits) - static_cast<double>(logits[target]);
}

std::vector<double> softmax_double(std::span<const float> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> probs(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(static_cast<double>(logits[i]) - lse);
    }
    return probs;
}

double kl_divergence(std::span<const float> candidate_logits,
                     std::span<const double> target_probs) {
    if (candidate_logits.size() != target_probs.size()) {
        throw std::invalid_argument("kl_divergence: length mismatch");
    }
    double total = 0.0;
    for (const double p : target_probs) {
        if (p < 0.0) {
            throw std::invalid_argument("kl_divergence: negative target probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-4) {
        throw std::invalid_argument("kl_divergence: target must sum to 1");
    }
    const double lse = log_sum_exp(candidate_logits);
    double kl = 0.0;
    for (size_t i = 0; i < target_probs.size(); ++i) {
        const double p = target_probs[i];
        if (p == 0.0) continue;  // 0 log 0 = 0
        const double log_q = static_cast<double>(candidate_logits[i]) - lse;
        kl += p * (std::log(p) - log_q);
    }
    return kl;
}

LensProfile build_profile(const CheckpointBundle& bundle, const ResidualTrace& trace,
                          std::optional<int> gold) {
    const ModelConfig& cfg = bundle.config;
    const int k = cfg.n_layer;
    if (static_cast<int>(trace.states.size()) != k + 1) {
        throw std::invalid_argument("build_profile: trace has " +
                                    std::to_string(trace.states.size()) + " states, expected " +
                                    std::to_string(k + 1));
    }
    if (gold && (*gold < 0 || *gold >= cfg.vocab_size)) {
        throw std::invalid_argument("build_profile: gold token out of range");
    }

    LensProfile profile;
    profile.n_layer = k;
    profile.gold_token_id = gold;

    const std::vector<float> final_logits = residual_prediction(bundle, trace.states.back());
    const int sampled = sampled_token(final_logits);
    profile.sampled_token_id = sampled;
    profile.correct = gold.has_value() && *gold == sampled;

    const std::vector<double> output_probs = softmax_double(final_logits);
    std::vector<double> sampled_onehot(final_logits.size(), 0.0);
    sampled_onehot[sampled] = 1.0;

    const Matrix& wte = bundle.wte();
    const auto sampled_embedding = wte.row(sampled);

    for (int i = 0; i <= k; ++i) {
        const std::vector<float> logits =
            i == k ? final_logits : residual_prediction(bundle, trace.states[i]);
        profile.ce_vs_sampled.push_back(cross_entropy_onehot(logits, sampled));
        profile.kl_vs_output_logits.push_back(kl_divergence(logits, output_probs));
        profile.kl_vs_sampled_onehot.push_back(kl_divergence(logits, sampled_onehot));
        profile.cosine_vs_sampled_embedding.push_back(cosine(trace.states[i], sampled_embedding));
        profile.top_token.push_back(sampled_token(logits));
        if (gold) {
            profile.ce_vs_gold.push_back(cross_entropy_onehot(logits, *gold));
            profile.cosine_vs_gold_embedding.push_back(cosine(trace.states[i], wte.row(*gold)));
        }
    }
    profile.output_ce = profile.ce_vs_sampled.back();
    return profile;
}

}  // namespace rlens

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rlens/checkpoint.hpp"
#include "rlens/runtime.hpp"

namespace rlens {

struct TargetSpec {
    enum class Kind { sampled, gold };
    Kind kind = Kind::sampled;
    int token_id = 0;
};

// Per-layer logit-lens metrics over a residual trace. Arrays run over layer
// index 0..k inclusive; index 0 is the pre-layer state. All values in nats.
struct LensProfile {
    int n_layer = 0;
    int sampled_token_id = 0;             // y-hat: argmax of the final logits
    std::optional<int> gold_token_id;     // y, when the dataset provides one

    std::vector<double> ce_vs_sampled;
    std::vector<double> ce_vs_gold;       // empty without gold
    std::vector<double> kl_vs_output_logits;
    std::vector<double> kl_vs_sampled_onehot;
    std::vector<double> cosine_vs_sampled_embedding;
    std::vector<double> cosine_vs_gold_embedding;  // empty without gold
    std::vector<int> top_token;

    double output_ce = 0.0;  // == ce_vs_sampled[k]
    bool correct = false;    // y-hat == y; meaningful only with gold
};

// The logit lens: unembed(final_ln(e)).
std::vector<float> residual_prediction(const CheckpointBundle& bundle, std::span<const float> e);

// -log softmax(logits)[target]; the NLL of the target token.
double cross_entropy_onehot(std::span<const float> logits, int target);

// sum p log(p/q) with 0 log 0 = 0 and q = softmax(candidate_logits).
double kl_divergence(std::span<const float> candidate_logits, std::span<const double> target_probs);

// softmax with double accumulation throughout; the target-distribution form
// used by kl_divergence.
std::vector<double> softmax_double(std::span<const float> logits);

LensProfile build_profile(const CheckpointBundle& bundle, const ResidualTrace& trace,
                          std::optional<int> gold = std::nullopt);

}  // namespace rlens

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlens/bpe.hpp"
#include "rlens/checkpoint.hpp"
#include "rlens/idioms.hpp"
#include "rlens/lens.hpp"
#include "rlens/runtime.hpp"

namespace rlens {

// Tukey box statistics: whiskers at 1.5 IQR, outliers beyond.
struct BoxStats {
    int count = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double whisker_lo = 0.0;
    double whisker_hi = 0.0;
    std::vector<double> outliers;
};

// Box statistics per layer for one (metric, group) pair.
struct LayerAggregate {
    std::string metric;
    std::string group;  // "correct" | "incorrect" | "all"
    std::vector<BoxStats> layers;
};

// Mean per-layer change in CE vs gold; negative means the update reduced loss.
struct DeltaLossTable {
    int n_layer = 0;
    std::vector<double> mean_delta_correct;
    std::vector<double> mean_delta_incorrect;
    std::vector<double> mean_delta_all;
    int n_correct = 0;
    int n_incorrect = 0;
};

struct RocResult {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), monotone from (0,0) to (1,1)
    std::vector<double> thresholds;                 // per point; +inf for the (0,0) corner
    std::optional<double> auc;                      // empty when a class is empty
    std::optional<double> u_statistic;
    int n_correct = 0;
    int n_incorrect = 0;
};

struct FitSummary {
    double exp_rate = 0.0;  // MLE for the correct group: 1 / mean
    double exp_mean = 0.0;
    double norm_mean = 0.0;  // moments for the incorrect group
    double norm_std = 0.0;   // population convention
    double threshold_rule = 1.5;
};

// Interpolating (type-7) quantile; q in [0,1].
double quantile(std::vector<double> sorted_or_not, double q);
BoxStats box_stats(std::span<const double> values);

// Lower score predicts the correct class; thresholds sweep all distinct
// scores; AUC by trapezoid; U by pairwise comparison with ties at half credit.
RocResult roc_auc(std::span<const double> correct_scores,
                  std::span<const double> incorrect_scores);

FitSummary fit_distributions(std::span<const double> correct_scores,
                             std::span<const double> incorrect_scores, double threshold = 1.5);

DeltaLossTable delta_loss_table(std::span<const LensProfile> profiles);

struct ExperimentOptions {
    double threshold = 1.5;
    bool parallel = true;
};

struct SampleError {
    int source_index;
    std::string message;
};

struct ExperimentResult {
    std::vector<LensProfile> profiles;    // in sample order, failed samples omitted
    std::vector<int> profile_sample_pos;  // position in the input span, parallel to profiles
    std::vector<SampleError> errors;
    std::vector<LayerAggregate> aggregates;
    DeltaLossTable delta_loss;
    RocResult roc;
    FitSummary fits;
    int n_correct = 0;
    int n_incorrect = 0;
};

// Greedy single-token prediction per prompt; correctness is y-hat == target.
// Individual forward failures are recorded and the run continues.
ExperimentResult run_idiom_experiment(const CheckpointBundle& bundle, const BpeVocab& vocab,
                                      std::span<const IdiomSample> samples,
                                      const ExperimentOptions& options = {});

struct ScanRecord {
    int step = 0;
    int token_id = 0;
    std::string token_text;
    double ce_vs_argmax = 0.0;   // output CE against y-hat
    double ce_vs_sampled = 0.0;  // output CE against the emitted token
    bool above_threshold = false;
};

struct GenerationScan {
    std::vector<ScanRecord> records;
    bool truncated = false;
};

GenerationScan generation_scan(const CheckpointBundle& bundle, const BpeVocab& vocab,
                               std::string_view prompt, const SamplerConfig& config,
                               double threshold = 1.5);

}  // namespace rlens

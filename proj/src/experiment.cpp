#include "rlens/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace rlens {

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw std::invalid_argument("quantile: empty input");
    }
    if (q < 0.0 || q > 1.0) {
        throw std::invalid_argument("quantile: q out of [0,1]");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

BoxStats box_stats(std::span<const double> values) {
    BoxStats s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    std::vector<double> v(values.begin(), values.end());
    s.median = quantile(v, 0.5);
    s.q1 = quantile(v, 0.25);
    s.q3 = quantile(v, 0.75);
    const double iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * iqr;
    const double hi_fence = s.q3 + 1.5 * iqr;
    // Whiskers reach the most extreme data points inside the fences.
    s.whisker_lo = s.q3;
    s.whisker_hi = s.q1;
    bool any_inside = false;
    for (const double x : v) {
        if (x >= lo_fence && x <= hi_fence) {
            any_inside = true;
            s.whisker_lo = std::min(s.whisker_lo, x);
            s.whisker_hi = std::max(s.whisker_hi, x);
        }
    }
    if (!any_inside) {
        s.whisker_lo = s.q1;
        s.whisker_hi = s.q3;
    }
    std::sort(v.begin(), v.end());
    for (const double x : v) {
        if (x < lo_fence || x > hi_fence) s.outliers.push_back(x);
    }
    return s;
}

RocResult roc_auc(std::span<const double> correct_scores,
                  std::span<const double> incorrect_scores) {
    RocResult result;
    result.n_correct = static_cast<int>(correct_scores.size());
    result.n_incorrect = static_cast<int>(incorrect_scores.size());
    if (correct_scores.empty() || incorrect_scores.empty()) {
        return result;  // undefined-AUC condition
    }

    // Positive class: incorrect (high score). TPR = fraction of incorrect at
    // or above the threshold, FPR = same for correct.
    std::vector<double> thresholds(correct_scores.begin(), correct_scores.end());
    thresholds.insert(thresholds.end(), incorrect_scores.begin(), incorrect_scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double nc = static_cast<double>(correct_scores.size());
    const double ni = static_cast<double>(incorrect_scores.size());

    result.points.emplace_back(0.0, 0.0);
    result.thresholds.push_back(std::numeric_limits<double>::infinity());
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
        const double t = *it;
        int fp = 0, tp = 0;
        for (const double s : correct_scores) {
            if (s >= t) ++fp;
        }
        for (const double s : incorrect_scores) {
            if (s >= t) ++tp;
        }
        result.points.emplace_back(fp / nc, tp / ni);
        result.thresholds.push_back(t);
    }

    double auc = 0.0;
    for (size_t i = 1; i < result.points.size(); ++i) {
        const auto& [x0, y0] = result.points[i - 1];
        const auto& [x1, y1] = result.points[i];
        auc += (x1 - x0) * (y0 + y1) * 0.5;
    }
    result.auc = auc;

    // Mann-Whitney U: pairs where the incorrect score exceeds the correct one,
    // ties at half credit.
    double u = 0.0;
    for (const double si : incorrect_scores) {
        for (const double sc : correct_scores) {
            if (si > sc) {
                u += 1.0;
            } else if (si == sc) {
                u += 0.5;
            }
        }
    }
    result.u_statistic = u;
    return result;
}

FitSummary fit_distributions(std::span<const double> correct_scores,
                             std::span<const double> incorrect_scores, double threshold) {
    FitSummary fit;
    fit.threshold_rule = threshold;
    if (!correct_scores.empty()) {
        double mean = 0.0;
        for (const double s : correct_scores) mean += s;
        mean /= static_cast<double>(correct_scores.size());
        fit.exp_mean = mean;
        fit.exp_rate = mean > 0.0 ? 1.0 / mean : 0.0;
    }
    if (!incorrect_scores.empty()) {
        double mean = 0.0;
        for (const double s : incorrect_scores) mean += s;
        mean /= static_cast<double>(incorrect_scores.size());
        double var = 0.0;
        for (const double s : incorrect_scores) var += (s - mean) * (s - mean);
        var /= static_cast<double>(incorrect_scores.size());
        fit.norm_mean = mean;
        fit.norm_std = std::sqrt(var);
    }
    return fit;
}

DeltaLossTable delta_loss_table(std::span<const LensProfile> profiles) {
    DeltaLossTable table;
    if (profiles.empty()) {
        return table;
    }
    const int k = profiles.front().n_layer;
    table.n_layer = k;
    table.mean_delta_correct.assign(k, 0.0);
    table.mean_delta_incorrect.assign(k, 0.0);
    table.mean_delta_all.assign(k, 0.0);

    for (const LensProfile& p : profiles) {
        if (p.ce_vs_gold.empty()) {
            throw std::invalid_argument("delta_loss_table: profile lacks gold-target CE");
        }
        if (p.n_layer != k) {
            throw std::invalid_argument("delta_loss_table: mixed layer counts");
        }
        if (p.correct) {
            ++table.n_correct;
        } else {
            ++table.n_incorrect;
        }
        for (int i = 0; i < k; ++i) {
            const double d = p.ce_vs_gold[i + 1] - p.ce_vs_gold[i];
            table.mean_delta_all[i] += d;
            (p.correct ? table.mean_delta_correct[i] : table.mean_delta_incorrect[i]) += d;
        }
    }
    const auto norm = [k](std::vector<double>& v, int n) {
        if (n == 0) {
            v.assign(k, 0.0);
            return;
        }
        for (double& x : v) x /= static_cast<double>(n);
    };
    norm(table.mean_delta_correct, table.n_correct);
    norm(table.mean_delta_incorrect, table.n_incorrect);
    norm(table.mean_delta_all, table.n_correct + table.n_incorrect);
    return table;
}

namespace {

struct MetricView {
    const char* name;
    const std::vector<double>& (*get)(const LensProfile&);
};

const std::vector<double>& get_ce_sampled(const LensProfile& p) { return p.ce_vs_sampled; }
const std::vector<double>& get_ce_gold(const LensProfile& p) { return p.ce_vs_gold; }
const std::vector<double>& get_kl_output(const LensProfile& p) { return p.kl_vs_output_logits; }
const std::vector<double>& get_kl_onehot(const LensProfile& p) { return p.kl_vs_sampled_onehot; }
const std::vector<double>& get_cos_sampled(const LensProfile& p) {
    return p.cosine_vs_sampled_embedding;
}
const std::vector<double>& get_cos_gold(const LensProfile& p) {
    return p.cosine_vs_gold_embedding;
}

std::vector<LayerAggregate> aggregate_profiles(std::span<const LensProfile> profiles) {
    static constexpr MetricView kMetrics[] = {
        {"ce_vs_sampled", get_ce_sampled},         {"ce_vs_gold", get_ce_gold},
        {"kl_vs_output_logits", get_kl_output},    {"kl_vs_sampled_onehot", get_kl_onehot},
        {"cosine_vs_sampled", get_cos_sampled},    {"cosine_vs_gold", get_cos_gold},
    };
    static constexpr const char* kGroups[] = {"correct", "incorrect", "all"};

    std::vector<LayerAggregate> aggregates;
    if (profiles.empty()) return aggregates;
    const int layers = profiles.front().n_layer + 1;

    for (const MetricView& metric : kMetrics) {
        for (const char* group : kGroups) {
            LayerAggregate agg;
            agg.metric = metric.name;
            agg.group = group;
            for (int layer = 0; layer < layers; ++layer) {
                std::vector<double> column;
                for (const LensProfile& p : profiles) {
                    const std::vector<double>& series = metric.get(p);
                    if (static_cast<int>(series.size()) != layers) continue;  // metric absent
                    const bool in_group = std::string_view(group) == "all" ||
                                          (p.correct == (std::string_view(group) == "correct"));
                    if (in_group) column.push_back(series[layer]);
                }
                agg.layers.push_back(box_stats(column));
            }
            aggregates.push_back(std::move(agg));
        }
    }
    return aggregates;
}

}  // namespace

ExperimentResult run_idiom_experiment(const CheckpointBundle& bundle, const BpeVocab& vocab,
                                      std::span<const IdiomSample> samples,
                                      const ExperimentOptions& options) {
    if (samples.empty()) {
        throw std::invalid_argument("run_idiom_experiment: no samples");
    }
    ExperimentResult result;
    const auto n = static_cast<int>(samples.size());
    std::vector<std::optional<LensProfile>> slots(n);
    std::vector<std::optional<SampleError>> errors(n);

#pragma omp parallel for schedule(dynamic) if (options.parallel)
    for (int i = 0; i < n; ++i) {
        try {
            const std::vector<int> tokens = encode(vocab, samples[i].prompt);
            const ForwardResult fr = forward(bundle, tokens);
            slots[i] = build_profile(bundle, fr.trace, samples[i].target_token);
        } catch (const std::exception& e) {
            errors[i] = SampleError{samples[i].source_index, e.what()};
        }
    }

    // Deterministic ordered reduce by sample position.
    for (int i = 0; i < n; ++i) {
        if (slots[i]) {
            result.profiles.push_back(std::move(*slots[i]));
            result.profile_sample_pos.push_back(i);
        } else if (errors[i]) {
            result.errors.push_back(std::move(*errors[i]));
        }
    }

    std::vector<double> correct_scores, incorrect_scores;
    for (const LensProfile& p : result.profiles) {
        (p.correct ? correct_scores : incorrect_scores).push_back(p.output_ce);
    }
    result.n_correct = static_cast<int>(correct_scores.size());
    result.n_incorrect = static_cast<int>(incorrect_scores.size());

    result.aggregates = aggregate_profiles(result.profiles);
    result.delta_loss = delta_loss_table(result.profiles);
    result.roc = roc_auc(correct_scores, incorrect_scores);
    result.fits = fit_distributions(correct_scores, incorrect_scores, options.threshold);
    return result;
}

GenerationScan generation_scan(const CheckpointBundle& bundle, const BpeVocab& vocab,
                               std::string_view prompt, const SamplerConfig& config,
                               double threshold) {
    if (prompt.empty()) {
        throw std::invalid_argument("generation_scan: empty prompt");
    }
    const std::vector<int> prompt_tokens = encode(vocab, prompt);
    const GenerationResult gen = generate(bundle, prompt_tokens, config);

    GenerationScan scan;
    scan.truncated = gen.truncated;
    for (size_t step = 0; step < gen.steps.size(); ++step) {
        const GenerationStep& gs = gen.steps[step];
        ScanRecord rec;
        rec.step = static_cast<int>(step);
        rec.token_id = gs.token_id;
        const int ids[1] = {gs.token_id};
        rec.token_text = decode(vocab, ids);
        const int argmax = sampled_token(gs.result.logits);
        rec.ce_vs_argmax = cross_entropy_onehot(gs.result.logits, argmax);
        rec.ce_vs_sampled = cross_entropy_onehot(gs.result.logits, gs.token_id);
        rec.above_threshold = rec.ce_vs_argmax > threshold;
        scan.records.push_back(std::move(rec));
    }
    return scan;
}

}  // namespace rlens

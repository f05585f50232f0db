#include "rlens/report.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "rlens/bpe.hpp"
#include "rlens/checkpoint.hpp"
#include "rlens/experiment.hpp"
#include "rlens/idioms.hpp"
#include "rlens/lens.hpp"
#include "rlens/runtime.hpp"

#ifndef RLENS_REVISION
#define RLENS_REVISION "unknown"
#endif

namespace rlens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Serializes token text that may slice multi-byte characters.
std::string dump_json(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string iso_utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Single writer per output directory.
class OutputLock {
  public:
    explicit OutputLock(const fs::path& out_dir) : path_(out_dir / ".rlens.lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw std::runtime_error("output directory is locked by another run (remove " +
                                     path_.string() + " if stale)");
        }
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

  private:
    fs::path path_;
    int fd_ = -1;
};

struct LoadedModel {
    CheckpointBundle bundle;
    BpeVocab vocab;
};

LoadedModel load_model(const CommonJob& job) {
    if (job.model_dir.empty()) {
        throw std::invalid_argument("--model-dir is required");
    }
    LoadedModel m;
    m.bundle = load_checkpoint(job.model_dir);
    const fs::path vocab_dir = job.vocab_dir.empty() ? fs::path(job.model_dir)
                                                     : fs::path(job.vocab_dir);
    m.vocab = BpeVocab::load_dir(vocab_dir);
    return m;
}

json config_echo(const ModelConfig& c) {
    return {{"n_layer", c.n_layer},       {"n_head", c.n_head},
            {"n_embd", c.n_embd},         {"vocab_size", c.vocab_size},
            {"n_ctx", c.n_ctx},           {"layer_norm_epsilon", c.layer_norm_epsilon}};
}

void write_manifest(const fs::path& out_dir, const std::string& command, const CommonJob& job,
                    const json& extra, const ModelConfig& config,
                    const std::string& started_at) {
    json m = {
        {"command", command},
        {"model_dir", job.model_dir},
        {"out_dir", job.out_dir},
        {"revision", RLENS_REVISION},
        {"threshold", job.threshold},
        {"started_at", started_at},
        {"finished_at", iso_utc_now()},
        {"config", config_echo(config)},
    };
    m.update(extra);
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    out << m.dump(2) << "\n";
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
    return out;
}

int classify_exception() {
    try {
        throw;
    } catch (const LoadError&) {
        return kExitValidation;
    } catch (const std::invalid_argument&) {
        return kExitValidation;
    } catch (const json::exception&) {
        return kExitValidation;
    } catch (...) {
        return kExitRuntime;
    }
}

int report_failure(const char* command) {
    try {
        throw;
    } catch (const std::exception& e) {
        const int code = classify_exception();
        std::cerr << "rlens " << command << ": " << e.what() << "\n";
        return code;
    }
}

// ---- cmd_idioms ------------------------------------------------------------

struct LoadedDataset {
    std::vector<IdiomSample> samples;
    std::optional<DatasetBuildReport> report;  // present when built from raw idioms
};

LoadedDataset load_dataset(const std::string& path, const BpeVocab& vocab) {
    if (path.empty()) {
        throw std::invalid_argument("--dataset is required");
    }
    const fs::path p(path);
    if (p.extension() == ".txt") {
        auto [samples, report] = build_dataset(load_epie(p), kIdiomInstruction, vocab);
        return {std::move(samples), report};
    }
    if (p.extension() == ".jsonl") {
        // Either raw {"idiom": ...} lines or a prebuilt dataset.
        std::ifstream in(p);
        if (!in) {
            throw std::invalid_argument("cannot open dataset " + path);
        }
        std::string line;
        while (std::getline(in, line) && line.empty()) {
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("idiom_text")) {
            return {read_dataset_jsonl(p), std::nullopt};
        }
        auto [samples, report] = build_dataset(load_epie(p), kIdiomInstruction, vocab);
        return {std::move(samples), report};
    }
    throw std::invalid_argument("dataset must be .txt or .jsonl: " + path);
}

void write_profiles_jsonl(const fs::path& file, const ExperimentResult& result,
                          std::span<const IdiomSample> samples) {
    auto out = open_out(file);
    for (size_t i = 0; i < result.profiles.size(); ++i) {
        const LensProfile& p = result.profiles[i];
        const IdiomSample& s = samples[result.profile_sample_pos[i]];
        json j = {
            {"index", s.source_index},
            {"prompt", s.prompt},
            {"target_word", s.target_word},
            {"target_token", s.target_token},
            {"sampled_token", p.sampled_token_id},
            {"correct", p.correct},
            {"output_ce", p.output_ce},
            {"ce_vs_sampled", p.ce_vs_sampled},
            {"ce_vs_gold", p.ce_vs_gold},
            {"kl_vs_output_logits", p.kl_vs_output_logits},
            {"kl_vs_sampled_onehot", p.kl_vs_sampled_onehot},
            {"cosine_vs_sampled", p.cosine_vs_sampled_embedding},
            {"cosine_vs_gold", p.cosine_vs_gold_embedding},
            {"top_tokens", p.top_token},
        };
        out << dump_json(j) << "\n";
    }
    for (const SampleError& e : result.errors) {
        out << dump_json(json{{"index", e.source_index}, {"error", e.message}}) << "\n";
    }
}

bool metric_selected(const std::string& metric_name, const std::string& target,
                     const std::string& metric_flag) {
    const bool gold_metric = metric_name.ends_with("_gold");
    if (target == "gold") {
        if (!gold_metric && metric_name != "kl_vs_output_logits") return false;
    } else {
        if (gold_metric) return false;
    }
    if (metric_flag == "all") return true;
    return metric_name.starts_with(metric_flag == "cosine" ? "cosine" : metric_flag);
}

void write_aggregates_csv(const fs::path& file, const ExperimentResult& result,
                          const IdiomsJob& job) {
    auto out = open_out(file);
    out << "metric,group,layer,count,median,q1,q3,whisker_lo,whisker_hi,outliers\n";
    for (const LayerAggregate& agg : result.aggregates) {
        if (!metric_selected(agg.metric, job.target, job.metric)) continue;
        for (size_t layer = 0; layer < agg.layers.size(); ++layer) {
            const BoxStats& b = agg.layers[layer];
            if (b.count == 0) continue;
            std::string outliers;
            for (size_t i = 0; i < b.outliers.size(); ++i) {
                if (i) outliers += '|';
                outliers += fmt_double(b.outliers[i]);
            }
            out << agg.metric << ',' << agg.group << ',' << layer << ',' << b.count << ','
                << fmt_double(b.median) << ',' << fmt_double(b.q1) << ',' << fmt_double(b.q3)
                << ',' << fmt_double(b.whisker_lo) << ',' << fmt_double(b.whisker_hi) << ','
                << outliers << "\n";
        }
    }
}

void write_delta_loss_csv(const fs::path& file, const DeltaLossTable& table) {
    auto out = open_out(file);
    out << "layer,group,mean_delta,count\n";
    for (int i = 0; i < table.n_layer; ++i) {
        out << (i + 1) << ",correct," << fmt_double(table.mean_delta_correct[i]) << ','
            << table.n_correct << "\n";
        out << (i + 1) << ",incorrect," << fmt_double(table.mean_delta_incorrect[i]) << ','
            << table.n_incorrect << "\n";
        out << (i + 1) << ",all," << fmt_double(table.mean_delta_all[i]) << ','
            << (table.n_correct + table.n_incorrect) << "\n";
    }
}

void write_roc_csv(const fs::path& file, const RocResult& roc) {
    auto out = open_out(file);
    out << "threshold,fpr,tpr\n";
    for (size_t i = 0; i < roc.points.size(); ++i) {
        out << fmt_double(roc.thresholds[i]) << ',' << fmt_double(roc.points[i].first) << ','
            << fmt_double(roc.points[i].second) << "\n";
    }
}

void write_summary_json(const fs::path& file, const ExperimentResult& result,
                        const LoadedDataset& dataset) {
    json fit = {
        {"exp_rate", result.fits.exp_rate},   {"exp_mean", result.fits.exp_mean},
        {"norm_mean", result.fits.norm_mean}, {"norm_std", result.fits.norm_std},
        {"threshold_rule", result.fits.threshold_rule},
    };
    json j = {
        {"n_samples", dataset.samples.size()},
        {"n_profiles", result.profiles.size()},
        {"n_errors", result.errors.size()},
        {"n_correct", result.n_correct},
        {"n_incorrect", result.n_incorrect},
        {"auc", result.roc.auc ? json(*result.roc.auc) : json(nullptr)},
        {"u_statistic", result.roc.u_statistic ? json(*result.roc.u_statistic) : json(nullptr)},
        {"fit", fit},
    };
    if (dataset.report) {
        j["dataset"] = {
            {"source_count", dataset.report->source_count},
            {"accepted", dataset.report->accepted},
            {"excluded_multitoken", dataset.report->excluded_multitoken},
            {"excluded_other", dataset.report->excluded_other},
        };
    }
    auto out = open_out(file);
    out << j.dump(2) << "\n";
}

}  // namespace

int run_idioms(const IdiomsJob& job) {
    try {
        if (job.out_dir.empty()) {
            throw std::invalid_argument("--out is required");
        }
        const std::string started = iso_utc_now();
        fs::create_directories(job.out_dir);
        OutputLock lock{fs::path(job.out_dir)};

        LoadedModel model = load_model(job);
        LoadedDataset dataset = load_dataset(job.dataset, model.vocab);
        if (dataset.samples.empty()) {
            throw std::invalid_argument("dataset produced no usable samples");
        }

        ExperimentOptions options;
        options.threshold = job.threshold;
        const ExperimentResult result =
            run_idiom_experiment(model.bundle, model.vocab, dataset.samples, options);

        const fs::path out(job.out_dir);
        if (dataset.report) {
            write_dataset_jsonl(out / "dataset.jsonl", dataset.samples);
        }
        write_profiles_jsonl(out / "profiles.jsonl", result, dataset.samples);
        write_aggregates_csv(out / "aggregates.csv", result, job);
        write_delta_loss_csv(out / "delta_loss.csv", result.delta_loss);
        write_roc_csv(out / "roc.csv", result.roc);
        write_summary_json(out / "summary.json", result, dataset);
        write_manifest(out, "idioms", job,
                       {{"dataset", job.dataset}, {"target", job.target}, {"metric", job.metric}},
                       model.bundle.config, started);
        return kExitOk;
    } catch (...) {
        return report_failure("idioms");
    }
}

int run_generate(const GenerateJob& job) {
    try {
        if (job.out_dir.empty()) {
            throw std::invalid_argument("--out is required");
        }
        if (job.prompt.empty()) {
            throw std::invalid_argument("--prompt is required");
        }
        const std::string started = iso_utc_now();
        fs::create_directories(job.out_dir);
        OutputLock lock{fs::path(job.out_dir)};

        LoadedModel model = load_model(job);

        SamplerConfig config;
        config.seed = job.seed;
        config.temperature = static_cast<float>(job.temperature);
        config.max_tokens = job.max_tokens;
        config.mode = job.greedy ? SampleMode::greedy : SampleMode::temperature;

        const GenerationScan scan =
            generation_scan(model.bundle, model.vocab, job.prompt, config, job.threshold);

        const fs::path out(job.out_dir);
        {
            auto f = open_out(out / "tokens.jsonl");
            for (const ScanRecord& r : scan.records) {
                json j = {
                    {"step", r.step},
                    {"token_id", r.token_id},
                    {"token_text", r.token_text},
                    {"ce_vs_argmax", r.ce_vs_argmax},
                    {"ce_vs_sampled", r.ce_vs_sampled},
                    {"above_threshold", r.above_threshold},
                };
                f << dump_json(j) << "\n";
            }
        }
        if (job.chart) {
            auto f = open_out(out / "ce_bars.csv");
            f << "step,token_text,ce_vs_argmax\n";
            for (const ScanRecord& r : scan.records) {
                f << r.step << ',' << csv_quote(r.token_text) << ','
                  << fmt_double(r.ce_vs_argmax) << "\n";
            }
        }
        write_manifest(out, "generate", job,
                       {{"prompt", job.prompt},
                        {"seed", job.seed},
                        {"temperature", job.temperature},
                        {"max_tokens", job.max_tokens},
                        {"mode", job.greedy ? "greedy" : "temperature"},
                        {"truncated", scan.truncated}},
                       model.bundle.config, started);
        return kExitOk;
    } catch (...) {
        return report_failure("generate");
    }
}

int run_trace(const TraceJob& job) {
    try {
        if (job.out_dir.empty()) {
            throw std::invalid_argument("--out is required");
        }
        if (job.prompt.empty()) {
            throw std::invalid_argument("--prompt is required");
        }
        const std::string started = iso_utc_now();
        fs::create_directories(job.out_dir);
        OutputLock lock{fs::path(job.out_dir)};

        LoadedModel model = load_model(job);

        std::optional<int> gold;
        if (!job.gold_word.empty()) {
            gold = as_single_token(model.vocab, job.gold_word, true);
            if (!gold) {
                throw std::invalid_argument("--gold word '" + job.gold_word +
                                            "' is not a single token");
            }
        }

        const std::vector<int> tokens = encode(model.vocab, job.prompt);
        const ForwardResult fr = forward(model.bundle, tokens);
        const LensProfile profile = build_profile(model.bundle, fr.trace, gold);

        const fs::path out(job.out_dir);
        const bool as_json = job.format == "json";
        if (as_json) {
            json rows = json::array();
            for (int i = 0; i <= profile.n_layer; ++i) {
                const int top[1] = {profile.top_token[i]};
                json row = {
                    {"layer", i},
                    {"top_token_id", profile.top_token[i]},
                    {"top_token_text", decode(model.vocab, top)},
                    {"ce_vs_sampled", profile.ce_vs_sampled[i]},
                    {"cosine_vs_sampled", profile.cosine_vs_sampled_embedding[i]},
                };
                if (gold) {
                    row["ce_vs_gold"] = profile.ce_vs_gold[i];
                    row["cosine_vs_gold"] = profile.cosine_vs_gold_embedding[i];
                }
                rows.push_back(std::move(row));
            }
            auto f = open_out(out / "trace.json");
            f << dump_json(rows) << "\n";
        } else {
            auto f = open_out(out / "trace.csv");
            f << "layer,top_token_id,top_token_text,ce_vs_sampled,ce_vs_gold,cosine_vs_sampled,"
                 "cosine_vs_gold\n";
            for (int i = 0; i <= profile.n_layer; ++i) {
                const int top[1] = {profile.top_token[i]};
                f << i << ',' << profile.top_token[i] << ','
                  << csv_quote(decode(model.vocab, top)) << ','
                  << fmt_double(profile.ce_vs_sampled[i]) << ','
                  << (gold ? fmt_double(profile.ce_vs_gold[i]) : std::string()) << ','
                  << fmt_double(profile.cosine_vs_sampled_embedding[i]) << ','
                  << (gold ? fmt_double(profile.cosine_vs_gold_embedding[i]) : std::string())
                  << "\n";
            }
        }
        write_manifest(out, "trace", job,
                       {{"prompt", job.prompt},
                        {"gold", job.gold_word},
                        {"sampled_token", profile.sampled_token_id},
                        {"format", job.format}},
                       model.bundle.config, started);
        return kExitOk;
    } catch (...) {
        return report_failure("trace");
    }
}

}  // namespace rlens

// rlens: run GPT-2-family checkpoints while reading the residual stream
// through the logit lens, and export per-layer uncertainty metrics.

#include <CLI11.hpp>

#include "rlens/report.hpp"

int main(int argc, char** argv) {
    CLI::App app{"residual-stream lens and uncertainty metrics for GPT-2-family models"};
    app.require_subcommand(1);

    rlens::IdiomsJob idioms_job;
    rlens::GenerateJob generate_job;
    rlens::TraceJob trace_job;

    auto add_common = [](CLI::App* cmd, rlens::CommonJob& job) {
        cmd->add_option("--model-dir", job.model_dir, "checkpoint directory")->required();
        cmd->add_option("--vocab-dir", job.vocab_dir,
                        "vocab.json/merges.txt directory (default: model dir)");
        cmd->add_option("--out", job.out_dir, "output directory")->required();
        cmd->add_option("--format", job.format, "table format: csv|json")
            ->check(CLI::IsMember({"csv", "json"}));
        cmd->add_option("--threshold", job.threshold, "output-CE flag threshold (default 1.5)");
    };

    CLI::App* idioms = app.add_subcommand(
        "idioms", "run the idiom-completion experiment and export its statistics");
    add_common(idioms, idioms_job);
    idioms->add_option("--dataset", idioms_job.dataset, "idioms.txt, idioms.jsonl or dataset.jsonl")
        ->required();
    idioms->add_option("--target", idioms_job.target, "aggregate target family: sampled|gold")
        ->check(CLI::IsMember({"sampled", "gold"}));
    idioms->add_option("--metric", idioms_job.metric, "aggregate metrics: ce|kl|cosine|all")
        ->check(CLI::IsMember({"ce", "kl", "cosine", "all"}));

    CLI::App* generate =
        app.add_subcommand("generate", "open-ended generation with per-token output CE");
    add_common(generate, generate_job);
    generate->add_option("--prompt", generate_job.prompt, "prompt text")->required();
    generate->add_option("--seed", generate_job.seed, "sampler seed (default 42)");
    generate->add_option("--temperature", generate_job.temperature,
                         "sampling temperature (default 0.8)");
    generate->add_option("--max-tokens", generate_job.max_tokens,
                         "tokens to generate (default 50)");
    generate->add_flag("--greedy", generate_job.greedy, "argmax decoding instead of sampling");
    generate->add_flag("--chart", generate_job.chart, "also write ce_bars.csv");

    CLI::App* trace =
        app.add_subcommand("trace", "per-layer residual-prediction table for one prompt");
    add_common(trace, trace_job);
    trace->add_option("--prompt", trace_job.prompt, "prompt text")->required();
    trace->add_option("--gold", trace_job.gold_word,
                      "gold completion word (space-prefixed single token)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rlens::kExitUsage;
    }

    if (idioms->parsed()) return rlens::run_idioms(idioms_job);
    if (generate->parsed()) return rlens::run_generate(generate_job);
    if (trace->parsed()) return rlens::run_trace(trace_job);
    return rlens::kExitUsage;
}

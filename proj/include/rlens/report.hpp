#pragma once

#include <cstdint>
#include <string>

namespace rlens {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

struct CommonJob {
    std::string model_dir;
    std::string vocab_dir;  // defaults to model_dir when empty
    std::string out_dir;
    std::string format = "csv";  // csv | json, for the trace table
    double threshold = 1.5;
};

struct IdiomsJob : CommonJob {
    std::string dataset;           // idioms.txt, idioms.jsonl, or a dataset.jsonl
    std::string target = "sampled";  // sampled | gold: aggregate family emitted
    std::string metric = "all";      // ce | kl | cosine | all
};

struct GenerateJob : CommonJob {
    std::string prompt;
    uint64_t seed = 42;
    double temperature = 0.8;
    int max_tokens = 50;
    bool greedy = false;
    bool chart = false;  // also emit ce_bars.csv
};

struct TraceJob : CommonJob {
    std::string prompt;
    std::string gold_word;  // optional; enables the gold-target columns
};

// Each writes its outputs plus manifest.json into out_dir, holding a lock file
// for the duration. Returns one of the exit codes above.
int run_idioms(const IdiomsJob& job);
int run_generate(const GenerateJob& job);
int run_trace(const TraceJob& job);

}  // namespace rlens

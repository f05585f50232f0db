#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlens/bpe.hpp"

namespace rlens {

// Verbatim from the corpus construction: instruction + truncated idiom, with
// the idiom's final word as the single-token gold target.
inline constexpr std::string_view kIdiomInstruction =
    "The following prompt is the beginning of a popular English idiom, please respond with a "
    "single word to complete the phrase.";

struct IdiomSample {
    std::string idiom_text;
    std::string prompt;
    std::string target_word;
    int target_token = -1;
    int source_index = -1;
};

struct DatasetBuildReport {
    int source_count = 0;
    int accepted = 0;
    int excluded_multitoken = 0;
    int excluded_other = 0;
    std::vector<std::pair<int, std::string>> exclusion_reasons;  // (source_index, reason)
};

struct DatasetOptions {
    std::string joiner = " ";   // between instruction and idiom prefix
    bool leading_space = true;  // tokenize targets with a leading space
};

// idioms.txt: one idiom per line. idioms.jsonl: {"idiom": ...} per line.
std::vector<std::string> load_epie(const std::filesystem::path& path);

std::pair<std::vector<IdiomSample>, DatasetBuildReport> build_dataset(
    const std::vector<std::string>& idioms, std::string_view instruction, const BpeVocab& vocab,
    const DatasetOptions& options = {});

void write_dataset_jsonl(const std::filesystem::path& path,
                         const std::vector<IdiomSample>& samples);
std::vector<IdiomSample> read_dataset_jsonl(const std::filesystem::path& path);

}  // namespace rlens

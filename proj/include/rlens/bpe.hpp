#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rlens {

// GPT-2 byte-level BPE vocabulary: vocab.json (token string -> id) plus
// merges.txt (one merge pair per line, rank = line order). Token strings are
// sequences of byte-mapped codepoints, so encode/decode closes over arbitrary
// byte strings.
struct BpeVocab {
    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;
    // (left_id << 32 | right_id) -> {rank, merged_id}
    std::unordered_map<uint64_t, std::pair<int, int>> merge_rank;
    std::array<std::string, 256> byte_encoder;       // byte -> mapped codepoint (UTF-8)
    std::unordered_map<uint32_t, uint8_t> byte_decoder;

    int vocab_size() const { return static_cast<int>(id_to_token.size()); }

    static BpeVocab load(const std::filesystem::path& vocab_json,
                         const std::filesystem::path& merges_txt);
    // Convenience: dir must hold vocab.json and merges.txt.
    static BpeVocab load_dir(const std::filesystem::path& dir);
};

// Greedy lowest-rank-merge BPE over byte-mapped text with the GPT-2 regex
// pre-tokenization. Total over arbitrary byte strings.
std::vector<int> encode(const BpeVocab& vocab, std::string_view text);

// Inverse byte mapping of concatenated token strings. Throws on ids >= vocab_size.
std::string decode(const BpeVocab& vocab, std::span<const int> ids);

// The unique id if the (optionally space-prefixed) word encodes to exactly one
// token, otherwise nullopt.
std::optional<int> as_single_token(const BpeVocab& vocab, std::string_view word,
                                   bool with_leading_space);

// Exposed for tests: the regex pre-tokenization split.
std::vector<std::string> pretokenize(std::string_view text);

}  // namespace rlens

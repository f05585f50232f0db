#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "rlens/bpe.hpp"
#include "test_util.hpp"

using namespace rlens;
using rlens::test::gpt2_vocab;

TEST_CASE("empty round trip") {
    const BpeVocab& v = gpt2_vocab();
    CHECK(encode(v, "").empty());
    CHECK(decode(v, std::vector<int>{}).empty());
}

TEST_CASE("vocabulary shape") {
    const BpeVocab& v = gpt2_vocab();
    CHECK(v.vocab_size() == 50257);
    CHECK(v.merge_rank.size() == 50000);
    CHECK(v.token_to_id.at("<|endoftext|>") == 50256);
}

TEST_CASE("the paper's multi-token example") {
    const BpeVocab& v = gpt2_vocab();
    // "helpful" splits as ["help", "ful"]; with a leading space it is a
    // single vocabulary entry.
    const std::vector<int> ids = encode(v, "helpful");
    REQUIRE(ids.size() == 2);
    CHECK(v.id_to_token[ids[0]] == "help");
    CHECK(v.id_to_token[ids[1]] == "ful");
    CHECK(!as_single_token(v, "helpful", false).has_value());
    CHECK(as_single_token(v, "helpful", true) == 7613);
    CHECK(as_single_token(v, "words", true) == 2456);
    CHECK_THROWS_AS(as_single_token(v, "", true), std::invalid_argument);
}

TEST_CASE("matches the reference tokenizer on the frozen fixture") {
    const BpeVocab& v = gpt2_vocab();
    std::ifstream in(rlens::test::source_root() / "tests" / "fixtures" / "hf_tokens.json");
    REQUIRE(in.good());
    const nlohmann::json cases = nlohmann::json::parse(in);
    REQUIRE(cases.size() > 0);
    for (const auto& c : cases) {
        const std::string text = c["text"].get<std::string>();
        const std::vector<int> want = c["ids"].get<std::vector<int>>();
        const std::vector<int> got = encode(v, text);
        CAPTURE(text);
        CHECK(got == want);
        CHECK(decode(v, got) == text);
    }
}

TEST_CASE("round trip over random utf-8 and raw byte strings") {
    const BpeVocab& v = gpt2_vocab();
    std::mt19937 rng(2024);
    const std::vector<std::string> pool = {"a", "Z", " ", "  ", "'", "0", "9", ".",
                                           "\t", "\n", "é", "Ω", "中", "🙂", "\xff", "\xc3"};
    for (int it = 0; it < 200; ++it) {
        std::string s;
        const int len = static_cast<int>(rng() % 24);
        for (int i = 0; i < len; ++i) {
            s += pool[rng() % pool.size()];
        }
        CAPTURE(it);
        CHECK(decode(v, encode(v, s)) == s);
    }
    // arbitrary bytes, including invalid utf-8 runs
    for (int it = 0; it < 100; ++it) {
        std::string s;
        const int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) {
            s += static_cast<char>(rng() % 256);
        }
        CAPTURE(it);
        CHECK(decode(v, encode(v, s)) == s);
    }
}

TEST_CASE("encode is deterministic") {
    const BpeVocab& v = gpt2_vocab();
    const std::string text = "Actions speak louder than words, twice over.";
    CHECK(encode(v, text) == encode(v, text));
}

TEST_CASE("single-id decode matches the vocabulary entry after byte unmapping") {
    const BpeVocab& v = gpt2_vocab();
    std::mt19937 rng(7);
    for (int it = 0; it < 500; ++it) {
        const int id = static_cast<int>(rng() % v.vocab_size());
        const int ids[1] = {id};
        const std::string got = decode(v, ids);
        // direct table lookup oracle: unmap each codepoint of the token text
        std::string want;
        const std::string& tok = v.id_to_token[id];
        size_t i = 0;
        while (i < tok.size()) {
            uint32_t cp = static_cast<unsigned char>(tok[i]);
            size_t len = 1;
            if (cp >= 0xC0) {
                len = cp >= 0xE0 ? 3 : 2;
                cp = cp >= 0xE0 ? ((cp & 0x0F) << 12) |
                                      ((static_cast<unsigned char>(tok[i + 1]) & 0x3F) << 6) |
                                      (static_cast<unsigned char>(tok[i + 2]) & 0x3F)
                                : ((cp & 0x1F) << 6) |
                                      (static_cast<unsigned char>(tok[i + 1]) & 0x3F);
            }
            want += static_cast<char>(v.byte_decoder.at(cp));
            i += len;
        }
        CHECK(got == want);
    }
}

TEST_CASE("vocabulary sweep: encode(decode([v])) == [v] for single-piece tokens") {
    const BpeVocab& v = gpt2_vocab();
    int single_piece = 0;
    for (int id = 0; id < v.vocab_size(); ++id) {
        if (id == 50256) continue;  // <|endoftext|> is a control token, not BPE text
        const int ids[1] = {id};
        const std::string text = decode(v, ids);
        if (pretokenize(text).size() != 1) continue;
        ++single_piece;
        const std::vector<int> round = encode(v, text);
        CAPTURE(id);
        CAPTURE(text);
        REQUIRE(round.size() == 1);
        REQUIRE(round[0] == id);
    }
    // nearly the whole vocabulary is reachable as one pre-token piece
    CHECK(single_piece > 45000);
}

TEST_CASE("decode rejects out-of-range ids") {
    const BpeVocab& v = gpt2_vocab();
    const std::vector<int> bad{50257};
    CHECK_THROWS_AS(decode(v, bad), std::invalid_argument);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(decode(v, neg), std::invalid_argument);
}

TEST_CASE("pretokenize follows the GPT-2 pattern") {
    using V = std::vector<std::string>;
    CHECK(pretokenize("hello world") == V{"hello", " world"});
    CHECK(pretokenize("don't") == V{"don", "'t"});
    CHECK(pretokenize("I'll we've") == V{"I", "'ll", " we", "'ve"});
    CHECK(pretokenize("a  b") == V{"a", " ", " b"});
    CHECK(pretokenize("x1y2") == V{"x", "1", "y", "2"});
    CHECK(pretokenize("hi!?") == V{"hi", "!?"});
    CHECK(pretokenize("word ") == V{"word", " "});
    CHECK(pretokenize("\t\tword") == V{"\t", "\t", "word"});
    CHECK(pretokenize(" 's") == V{" '", "s"});
}

TEST_CASE("toy vocabulary loads and closes over bytes") {
    rlens::test::TempDir dir;
    rlens::test::write_toy_vocab(dir.path());
    const BpeVocab toy = BpeVocab::load_dir(dir.path());
    CHECK(toy.vocab_size() == 259);
    CHECK(decode(toy, encode(toy, "the cat")) == "the cat");
    // the " t" merge makes space-prefixed "t" a single token
    CHECK(as_single_token(toy, "t", true) == 256);
    CHECK(!as_single_token(toy, "q", true).has_value());
}

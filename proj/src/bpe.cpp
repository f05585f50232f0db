#include "rlens/bpe.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace rlens {

namespace {

std::string cp_to_utf8(uint32_t cp) {
    std::string s;
    if (cp < 0x80) {
        s += static_cast<char>(cp);
    } else if (cp < 0x800) {
        s += static_cast<char>(0xC0 | (cp >> 6));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        s += static_cast<char>(0xE0 | (cp >> 12));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        s += static_cast<char>(0xF0 | (cp >> 18));
        s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        s += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return s;
}

// Decodes the UTF-8 codepoint at s[i]. Invalid bytes come back as
// 0xDC00 + byte with length 1 so arbitrary byte strings still scan.
std::pair<uint32_t, size_t> utf8_next(std::string_view s, size_t i) {
    const auto b0 = static_cast<uint8_t>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    auto cont = [&](size_t k) {
        return i + k < s.size() && (static_cast<uint8_t>(s[i + k]) & 0xC0) == 0x80;
    };
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        const uint32_t cp = ((b0 & 0x1Fu) << 6) | (static_cast<uint8_t>(s[i + 1]) & 0x3Fu);
        if (cp >= 0x80) return {cp, 2};
    } else if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        const uint32_t cp = ((b0 & 0x0Fu) << 12) | ((static_cast<uint8_t>(s[i + 1]) & 0x3Fu) << 6) |
                            (static_cast<uint8_t>(s[i + 2]) & 0x3Fu);
        if (cp >= 0x800) return {cp, 3};
    } else if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        const uint32_t cp = ((b0 & 0x07u) << 18) | ((static_cast<uint8_t>(s[i + 1]) & 0x3Fu) << 12) |
                            ((static_cast<uint8_t>(s[i + 2]) & 0x3Fu) << 6) |
                            (static_cast<uint8_t>(s[i + 3]) & 0x3Fu);
        if (cp >= 0x10000 && cp <= 0x10FFFF) return {cp, 4};
    }
    return {0xDC00u + b0, 1};
}

bool is_space_cp(uint32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case 0x0B: case 0x0C:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_digit_cp(uint32_t cp) { return cp >= '0' && cp <= '9'; }

bool is_letter_cp(uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (is_space_cp(cp)) return false;
    // Common non-letter blocks; everything else beyond ASCII is treated as a
    // letter, which matches the \p{L} classes this corpus actually hits.
    if (cp >= 0xA1 && cp <= 0xBF) return false;
    if (cp == 0xD7 || cp == 0xF7) return false;
    if (cp >= 0x2010 && cp <= 0x2027) return false;
    if (cp >= 0x2030 && cp <= 0x205E) return false;
    if (cp >= 0x3001 && cp <= 0x303F) return false;
    if (cp >= 0xDC00 && cp <= 0xDCFF) return false;  // invalid-byte sentinels
    return true;
}

enum class CharClass { letter, digit, other };

CharClass classify(uint32_t cp) {
    if (is_digit_cp(cp)) return CharClass::digit;
    if (is_letter_cp(cp)) return CharClass::letter;
    return CharClass::other;
}

// "'s|'t|'re|'ve|'m|'ll|'d", longest alternatives first.
size_t match_contraction(std::string_view s, size_t i) {
    if (s[i] != '\'' || i + 1 >= s.size()) return 0;
    const std::string_view rest = s.substr(i + 1);
    for (std::string_view suffix : {"re", "ve", "ll"}) {
        if (rest.starts_with(suffix)) return 1 + suffix.size();
    }
    const char c = rest[0];
    if (c == 's' || c == 't' || c == 'm' || c == 'd') return 2;
    return 0;
}

// ' ?X+' starting at i; the char at i may be the optional leading space.
size_t scan_word(std::string_view s, size_t i) {
    size_t j = i;
    if (s[j] == ' ') ++j;
    auto [cp, len] = utf8_next(s, j);
    const CharClass cls = classify(cp);
    while (j < s.size()) {
        auto [c, l] = utf8_next(s, j);
        if (is_space_cp(c) || classify(c) != cls) break;
        j += l;
    }
    return j - i;
}

}  // namespace

// Mirrors the GPT-2 pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// with ordered alternation semantics.
std::vector<std::string> pretokenize(std::string_view text) {
    std::vector<std::string> pieces;
    size_t i = 0;
    while (i < text.size()) {
        if (const size_t cl = match_contraction(text, i)) {
            pieces.emplace_back(text.substr(i, cl));
            i += cl;
            continue;
        }
        auto [cp, cplen] = utf8_next(text, i);
        if (is_space_cp(cp)) {
            // Find the whitespace run and the byte offset of its last codepoint.
            size_t j = i, last = i;
            uint32_t last_cp = cp;
            while (j < text.size()) {
                auto [c, l] = utf8_next(text, j);
                if (!is_space_cp(c)) break;
                last = j;
                last_cp = c;
                j += l;
            }
            if (j == text.size()) {
                pieces.emplace_back(text.substr(i, j - i));  // \s+(?!\S) to end
                i = j;
            } else if (last_cp == ' ') {
                // Final space joins the following word via the ' ?' prefixes.
                if (last > i) pieces.emplace_back(text.substr(i, last - i));
                const size_t wl = scan_word(text, last);
                pieces.emplace_back(text.substr(last, wl));
                i = last + wl;
            } else {
                if (last > i) pieces.emplace_back(text.substr(i, last - i));
                pieces.emplace_back(text.substr(last, j - last));  // lone \s+
                i = j;
            }
        } else {
            const size_t wl = scan_word(text, i);
            pieces.emplace_back(text.substr(i, wl));
            i += wl;
        }
    }
    return pieces;
}

BpeVocab BpeVocab::load(const std::filesystem::path& vocab_json,
                        const std::filesystem::path& merges_txt) {
    BpeVocab v;

    // bytes_to_unicode: printable bytes map to themselves, the rest to 256+n.
    {
        std::array<bool, 256> direct{};
        for (int b = 33; b <= 126; ++b) direct[b] = true;
        for (int b = 161; b <= 172; ++b) direct[b] = true;
        for (int b = 174; b <= 255; ++b) direct[b] = true;
        uint32_t n = 0;
        for (int b = 0; b < 256; ++b) {
            const uint32_t cp = direct[b] ? static_cast<uint32_t>(b) : 256 + n++;
            v.byte_encoder[b] = cp_to_utf8(cp);
            v.byte_decoder.emplace(cp, static_cast<uint8_t>(b));
        }
    }

    std::ifstream vin(vocab_json);
    if (!vin) {
        throw std::runtime_error("bpe: cannot open " + vocab_json.string());
    }
    nlohmann::json j = nlohmann::json::parse(vin, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("bpe: malformed vocab JSON " + vocab_json.string());
    }
    v.id_to_token.assign(j.size(), {});
    for (auto& [tok, idj] : j.items()) {
        const int id = idj.get<int>();
        if (id < 0 || id >= static_cast<int>(j.size()) || !v.id_to_token[id].empty()) {
            throw std::runtime_error("bpe: vocab ids must be dense and unique (token '" + tok +
                                     "')");
        }
        v.id_to_token[id] = tok;
        v.token_to_id.emplace(tok, id);
    }
    for (const auto& enc : v.byte_encoder) {
        if (!v.token_to_id.count(enc)) {
            throw std::runtime_error("bpe: vocab lacks byte token '" + enc + "'");
        }
    }

    std::ifstream min(merges_txt);
    if (!min) {
        throw std::runtime_error("bpe: cannot open " + merges_txt.string());
    }
    std::string line;
    int rank = 0;
    bool first = true;
    while (std::getline(min, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            if (line.starts_with("#version")) continue;  // only line one is a header
        }
        if (line.empty()) continue;
        const size_t sp = line.find(' ');
        if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
            throw std::runtime_error("bpe: malformed merge line '" + line + "'");
        }
        const std::string left = line.substr(0, sp), right = line.substr(sp + 1);
        auto li = v.token_to_id.find(left), ri = v.token_to_id.find(right),
             mi = v.token_to_id.find(left + right);
        if (li == v.token_to_id.end() || ri == v.token_to_id.end() || mi == v.token_to_id.end()) {
            throw std::runtime_error("bpe: merge references unknown token in line '" + line + "'");
        }
        const uint64_t key =
            (static_cast<uint64_t>(li->second) << 32) | static_cast<uint32_t>(ri->second);
        v.merge_rank.emplace(key, std::make_pair(rank, mi->second));
        ++rank;
    }
    return v;
}

BpeVocab BpeVocab::load_dir(const std::filesystem::path& dir) {
    return load(dir / "vocab.json", dir / "merges.txt");
}

namespace {

void bpe_piece(const BpeVocab& v, std::string_view piece, std::vector<int>& out) {
    std::vector<int> ids;
    ids.reserve(piece.size());
    for (const char ch : piece) {
        const auto b = static_cast<uint8_t>(ch);
        ids.push_back(v.token_to_id.at(v.byte_encoder[b]));
    }
    while (ids.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        int best_merged = -1;
        size_t best_pos = 0;
        for (size_t i = 0; i + 1 < ids.size(); ++i) {
            const uint64_t key =
                (static_cast<uint64_t>(ids[i]) << 32) | static_cast<uint32_t>(ids[i + 1]);
            auto it = v.merge_rank.find(key);
            if (it != v.merge_rank.end() && it->second.first < best_rank) {
                best_rank = it->second.first;
                best_merged = it->second.second;
                best_pos = i;
            }
        }
        if (best_merged < 0) break;
        // Merge every occurrence of the winning pair, left to right.
        const int a = ids[best_pos], b = ids[best_pos + 1];
        std::vector<int> next;
        next.reserve(ids.size());
        for (size_t i = 0; i < ids.size();) {
            if (i + 1 < ids.size() && ids[i] == a && ids[i + 1] == b) {
                next.push_back(best_merged);
                i += 2;
            } else {
                next.push_back(ids[i]);
                ++i;
            }
        }
        ids = std::move(next);
    }
    out.insert(out.end(), ids.begin(), ids.end());
}

}  // namespace

std::vector<int> encode(const BpeVocab& vocab, std::string_view text) {
    std::vector<int> out;
    for (const std::string& piece : pretokenize(text)) {
        bpe_piece(vocab, piece, out);
    }
    return out;
}

std::string decode(const BpeVocab& vocab, std::span<const int> ids) {
    std::string mapped;
    for (const int id : ids) {
        if (id < 0 || id >= vocab.vocab_size()) {
            throw std::invalid_argument("decode: token id " + std::to_string(id) +
                                        " out of range");
        }
        mapped += vocab.id_to_token[static_cast<size_t>(id)];
    }
    std::string bytes;
    bytes.reserve(mapped.size());
    size_t i = 0;
    while (i < mapped.size()) {
        auto [cp, len] = utf8_next(mapped, i);
        auto it = vocab.byte_decoder.find(cp);
        if (it == vocab.byte_decoder.end()) {
            throw std::invalid_argument("decode: token text contains unmapped codepoint");
        }
        bytes += static_cast<char>(it->second);
        i += len;
    }
    return bytes;
}

std::optional<int> as_single_token(const BpeVocab& vocab, std::string_view word,
                                   bool with_leading_space) {
    if (word.empty()) {
        throw std::invalid_argument("as_single_token: empty word");
    }
    std::string text;
    if (with_leading_space) text += ' ';
    text += word;
    const std::vector<int> ids = encode(vocab, text);
    if (ids.size() == 1) return ids[0];
    return std::nullopt;
}

}  // namespace rlens

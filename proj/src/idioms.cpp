#include "rlens/idioms.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rlens {

using nlohmann::json;

std::vector<std::string> load_epie(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_epie: cannot open " + path.string());
    }
    const bool jsonl = path.extension() == ".jsonl";
    std::vector<std::string> idioms;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (jsonl) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("idiom") ||
                !j["idiom"].is_string()) {
                throw std::runtime_error("load_epie: malformed JSONL line in " + path.string());
            }
            idioms.push_back(j["idiom"].get<std::string>());
        } else {
            idioms.push_back(line);
        }
    }
    return idioms;
}

std::pair<std::vector<IdiomSample>, DatasetBuildReport> build_dataset(
    const std::vector<std::string>& idioms, std::string_view instruction, const BpeVocab& vocab,
    const DatasetOptions& options) {
    std::vector<IdiomSample> samples;
    DatasetBuildReport report;
    report.source_count = static_cast<int>(idioms.size());

    for (int idx = 0; idx < static_cast<int>(idioms.size()); ++idx) {
        const std::string& idiom = idioms[idx];
        const size_t split = idiom.find_last_of(' ');
        if (split == std::string::npos || split == 0 || split + 1 == idiom.size()) {
            ++report.excluded_other;
            report.exclusion_reasons.emplace_back(idx, "fewer than two words");
            continue;
        }
        const std::string prefix = idiom.substr(0, split);
        const std::string target = idiom.substr(split + 1);

        const std::optional<int> token = as_single_token(vocab, target, options.leading_space);
        if (!token) {
            ++report.excluded_multitoken;
            report.exclusion_reasons.emplace_back(idx, "target '" + target + "' is multi-token");
            continue;
        }

        IdiomSample sample;
        sample.idiom_text = idiom;
        sample.prompt = std::string(instruction) + options.joiner + prefix;
        sample.target_word = target;
        sample.target_token = *token;
        sample.source_index = idx;
        samples.push_back(std::move(sample));
        ++report.accepted;
    }
    return {std::move(samples), report};
}

void write_dataset_jsonl(const std::filesystem::path& path,
                         const std::vector<IdiomSample>& samples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("write_dataset_jsonl: cannot write " + path.string());
    }
    for (const IdiomSample& s : samples) {
        json j = {
            {"idiom_text", s.idiom_text},   {"prompt", s.prompt},
            {"target_word", s.target_word}, {"target_token", s.target_token},
            {"source_index", s.source_index},
        };
        out << j.dump() << "\n";
    }
}

std::vector<IdiomSample> read_dataset_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("read_dataset_jsonl: cannot open " + path.string());
    }
    std::vector<IdiomSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw std::runtime_error("read_dataset_jsonl: malformed line in " + path.string());
        }
        IdiomSample s;
        s.idiom_text = j.at("idiom_text").get<std::string>();
        s.prompt = j.at("prompt").get<std::string>();
        s.target_word = j.at("target_word").get<std::string>();
        s.target_token = j.at("target_token").get<int>();
        s.source_index = j.at("source_index").get<int>();
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace rlens

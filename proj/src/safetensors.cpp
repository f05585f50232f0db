#include "rlens/safetensors.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rlens {

using nlohmann::json;

std::map<std::string, RawTensor> read_safetensors(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw std::runtime_error("safetensors: cannot open " + file.string());
    }

    uint8_t len_bytes[8];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) {
        throw std::runtime_error("safetensors: truncated header length in " + file.string());
    }
    uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) {
        header_len = (header_len << 8) | len_bytes[i];
    }
    if (header_len == 0 || header_len > (1u << 26)) {
        throw std::runtime_error("safetensors: malformed header length in " + file.string());
    }

    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw std::runtime_error("safetensors: truncated header in " + file.string());
    }

    json header = json::parse(header_text, nullptr, false);
    if (header.is_discarded() || !header.is_object()) {
        throw std::runtime_error("safetensors: malformed JSON header in " + file.string());
    }

    // Remaining bytes are the data section.
    std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());

    std::map<std::string, RawTensor> out;
    for (auto& [name, desc] : header.items()) {
        if (name == "__metadata__") continue;
        if (!desc.is_object() || !desc.contains("dtype") || !desc.contains("shape") ||
            !desc.contains("data_offsets")) {
            throw std::runtime_error("safetensors: malformed entry for tensor '" + name + "'");
        }
        const std::string dtype = desc["dtype"].get<std::string>();
        if (dtype != "F32") {
            throw std::runtime_error("safetensors: unsupported dtype " + dtype + " for tensor '" +
                                     name + "'");
        }
        RawTensor t;
        for (auto& d : desc["shape"]) {
            t.shape.push_back(d.get<int64_t>());
        }
        const uint64_t begin = desc["data_offsets"][0].get<uint64_t>();
        const uint64_t end = desc["data_offsets"][1].get<uint64_t>();
        const uint64_t expect = static_cast<uint64_t>(t.numel()) * sizeof(float);
        if (end < begin || end - begin != expect || end > payload.size()) {
            throw std::runtime_error("safetensors: bad data_offsets for tensor '" + name + "'");
        }
        t.data.resize(static_cast<size_t>(t.numel()));
        std::memcpy(t.data.data(), payload.data() + begin, end - begin);
        out.emplace(name, std::move(t));
    }
    return out;
}

void write_safetensors(const std::filesystem::path& file,
                       const std::map<std::string, RawTensor>& tensors) {
    if (tensors.empty()) {
        throw std::invalid_argument("safetensors: refusing to write empty tensor map");
    }

    json header = json::object();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {  // std::map iterates name-sorted
        const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
        header[name] = {{"dtype", "F32"},
                        {"shape", t.shape},
                        {"data_offsets", {offset, offset + nbytes}}};
        offset += nbytes;
    }
    std::string header_text = header.dump();
    // Pad with spaces to an 8-byte boundary, matching the reference writers.
    while (header_text.size() % 8 != 0) header_text.push_back(' ');

    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("safetensors: cannot write " + file.string());
    }
    const uint64_t header_len = header_text.size();
    char len_bytes[8];
    for (int i = 0; i < 8; ++i) {
        len_bytes[i] = static_cast<char>((header_len >> (8 * i)) & 0xff);
    }
    out.write(len_bytes, 8);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) {
        throw std::runtime_error("safetensors: write failed for " + file.string());
    }
}

}  // namespace rlens

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rlens {

// One tensor as stored on disk: original shape plus raw float32 payload.
struct RawTensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

// safetensors container: 8-byte little-endian JSON header length, JSON header
// mapping tensor name -> {dtype, shape, data_offsets}, then contiguous raw data.
// Only F32 payloads are supported.
std::map<std::string, RawTensor> read_safetensors(const std::filesystem::path& file);

// Writes tensors in name-sorted order so identical inputs produce identical bytes.
void write_safetensors(const std::filesystem::path& file,
                       const std::map<std::string, RawTensor>& tensors);

}  // namespace rlens

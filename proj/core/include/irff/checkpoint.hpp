#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

/// Flat parameter container:
///
///   "IRFF" | version u32 | count u32 |
///   per entry: name_len u16 | name bytes | rank u8 | dims u32 x rank | f32 data
///
/// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `targets` in place. Names, order and shapes
/// must match; the first mismatch raises ConfigError naming it.
void restore_into(const std::vector<NamedTensor>& loaded, std::vector<NamedTensor>& targets);

IRFF_END_NAMESPACE

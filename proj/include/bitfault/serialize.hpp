#pragma once

#include "bitfault/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace bitfault {

// Tensor container, all integers little-endian:
//
//   bytes 0..3   magic "FLT1"
//   u32          dtype tag (0 = f32, 1 = i32, 2 = coo)
//   u32          rank
//   u64 x rank   dims
//   f32 / i32 dense payload, numel(dims) elements       (tags 0, 1)
//   u64 nnz, u32 x (nnz*rank) indices, f32 x nnz values (tag 2)
enum class DType : std::uint32_t { F32 = 0, I32 = 1, Coo = 2 };

using AnyTensor = std::variant<DenseTensor, QuantTensor, SparseTensor>;

std::vector<std::uint8_t> encode(const DenseTensor& t);
std::vector<std::uint8_t> encode(const QuantTensor& t);
std::vector<std::uint8_t> encode(const SparseTensor& t);

/// Throws FormatError on a bad magic, unknown tag or truncated payload.
AnyTensor decode(std::span<const std::uint8_t> bytes);
DenseTensor decode_dense(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

} // namespace bitfault

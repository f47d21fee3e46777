// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor wire formats.
//
// Binary record, all integers little-endian:
//   bytes 0..3   magic "FSNT"
//   u32          format version (1)
//   u32 x 4      N, C, H, W
//   u32          dtype code (1 = float64, 2 = float32)
//   N*C*H*W little-endian IEEE-754 values of the given dtype
//
// Records may be concatenated; checkpoints are a sequence of records.

#ifndef FINSIGHT_SERIALIZE_HPP_
#define FINSIGHT_SERIALIZE_HPP_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "finsight/tensor.hpp"
#include "json.hpp"

namespace finsight {

enum class DType : std::uint32_t { kFloat64 = 1, kFloat32 = 2 };

inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t,
                  DType dtype = DType::kFloat64);
// Throws ParseError on a bad magic, version, dtype, or truncated payload.
Tensor read_tensor(std::istream& is);

std::string encode_tensor(const Tensor& t, DType dtype = DType::kFloat64);
Tensor decode_tensor(const std::string& bytes);

void save_tensors(const std::filesystem::path& path,
                  const std::vector<Tensor>& tensors);
std::vector<Tensor> load_tensors(const std::filesystem::path& path);

// Lossless JSON debug form: {"shape": [n,c,h,w], "data": [...]}.
nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace finsight

#endif  // FINSIGHT_SERIALIZE_HPP_

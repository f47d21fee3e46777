// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/serialize.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include "finsight/errors.hpp"

namespace finsight {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'S', 'N', 'T'};

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  os.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw ParseError("tensor record truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, DType dtype) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kTensorFormatVersion);
  const Shape s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dtype));
  for (double v : t.data()) {
    if (dtype == DType::kFloat64) {
      put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(os,
                            std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ParseError("tensor record: bad magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kTensorFormatVersion) {
    throw ParseError("tensor record: unsupported version " +
                     std::to_string(version));
  }
  Shape s;
  s.n = get_le<std::uint32_t>(is);
  s.c = get_le<std::uint32_t>(is);
  s.h = get_le<std::uint32_t>(is);
  s.w = get_le<std::uint32_t>(is);
  const auto code = get_le<std::uint32_t>(is);
  std::vector<double> data(s.numel());
  if (code == static_cast<std::uint32_t>(DType::kFloat64)) {
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  } else if (code == static_cast<std::uint32_t>(DType::kFloat32)) {
    for (double& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(is));
  } else {
    throw ParseError("tensor record: unknown dtype code " +
                     std::to_string(code));
  }
  return Tensor(s, std::move(data));
}

std::string encode_tensor(const Tensor& t, DType dtype) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t, dtype);
  return os.str();
}

Tensor decode_tensor(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_tensor(is);
}

void save_tensors(const std::filesystem::path& path,
                  const std::vector<Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open " + path.string() + " for writing");
  for (const Tensor& t : tensors) write_tensor(os, t);
}

std::vector<Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  std::vector<Tensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    out.push_back(read_tensor(is));
  }
  return out;
}

nlohmann::json tensor_to_json(const Tensor& t) {
  const Shape s = t.shape();
  return {{"shape", {s.n, s.c, s.h, s.w}}, {"data", t.values()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw ParseError("tensor json: shape must have 4 dims");
    return Tensor(Shape{dims[0], dims[1], dims[2], dims[3]},
                  j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tensor json: ") + e.what());
  }
}

}  // namespace finsight

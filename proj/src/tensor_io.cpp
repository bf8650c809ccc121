/*
 * Copyright 2026 The cembed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cembed/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace cembed {
namespace {

static_assert(std::endian::native == std::endian::little,
              "byte-order conversion not implemented for big-endian hosts");

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

void dump(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_embeddings(const std::filesystem::path& path, const Matrix& x, Dtype dtype) {
  if (x.cols() <= 0) throw InvalidArgument("write_embeddings: dim must be > 0 (" + path.string() + ")");
  if (!x.allFinite()) throw InvalidArgument("write_embeddings: non-finite entries (" + path.string() + ")");
  const std::size_t elem = dtype == Dtype::F32 ? 4 : 8;
  std::string buf;
  buf.reserve(kEmbeddingHeaderBytes + static_cast<std::size_t>(x.size()) * elem);
  buf.append(kEmbeddingMagic, 8);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(x.cols()));
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(x.rows()));
  buf.append(dtype == Dtype::F32 ? "f32" : "f64", 3);
  buf.push_back('\0');
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (dtype == Dtype::F32) {
        put<float>(buf, static_cast<float>(x(i, j)));
      } else {
        put<double>(buf, x(i, j));
      }
    }
  }
  dump(path, buf);
}

Matrix read_embeddings(const std::filesystem::path& path) {
  const std::string data = slurp(path);
  if (data.size() < kEmbeddingHeaderBytes) {
    throw FormatError(path.string() + ": truncated header (" + std::to_string(data.size()) +
                      " bytes, expected at least " + std::to_string(kEmbeddingHeaderBytes) + ")");
  }
  if (std::memcmp(data.data(), kEmbeddingMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad magic, not an embedding file");
  }
  const auto dim = get<std::uint32_t>(data.data() + 8);
  const auto count = get<std::uint64_t>(data.data() + 12);
  const std::string tag(data.data() + 20, 4);
  std::size_t elem = 0;
  if (tag == std::string("f32\0", 4)) {
    elem = 4;
  } else if (tag == std::string("f64\0", 4)) {
    elem = 8;
  } else {
    throw FormatError(path.string() + ": unknown dtype marker");
  }
  if (dim == 0) throw FormatError(path.string() + ": dim must be > 0");
  const std::size_t expected = static_cast<std::size_t>(count) * dim * elem;
  const std::size_t actual = data.size() - kEmbeddingHeaderBytes;
  if (actual != expected) {
    throw FormatError(path.string() + ": payload is " + std::to_string(actual) +
                      " bytes, expected " + std::to_string(expected));
  }
  Matrix x(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const char* p = data.data() + kEmbeddingHeaderBytes;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j, p += elem) {
      x(i, j) = elem == 4 ? static_cast<double>(get<float>(p)) : get<double>(p);
    }
  }
  return x;
}

Matrix quantize_f32(const Matrix& x) {
  return x.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void write_u64s(const std::filesystem::path& path, std::span<const std::uint64_t> values) {
  std::string buf;
  buf.reserve(values.size() * 8);
  for (auto v : values) put<std::uint64_t>(buf, v);
  dump(path, buf);
}

std::vector<std::uint64_t> read_u64s(const std::filesystem::path& path) {
  const std::string data = slurp(path);
  if (data.size() % 8 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(data.size()) +
                      " is not a multiple of 8");
  }
  std::vector<std::uint64_t> out(data.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get<std::uint64_t>(data.data() + 8 * i);
  return out;
}

}  // namespace cembed

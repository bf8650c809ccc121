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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cembed/numerics.hpp"

namespace cembed {

/// On-disk element type of an embedding file.
///
/// Embedding data is exchanged as f32. Checkpoints use the f64 marker so that
/// training resumes from bit-identical state.
enum class Dtype : std::uint8_t { F32, F64 };

/// Byte layout (little-endian):
///   [0, 8)   magic "CEMB0001"
///   [8, 12)  dim   u32, > 0
///   [12, 20) count u64
///   [20, 24) dtype "f32\0" or "f64\0"
///   [24, ..) count x dim row-major values
inline constexpr char kEmbeddingMagic[8] = {'C', 'E', 'M', 'B', '0', '0', '0', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

void write_embeddings(const std::filesystem::path& path, const Matrix& x, Dtype dtype = Dtype::F32);
Matrix read_embeddings(const std::filesystem::path& path);

/// Rounds every entry through f32, i.e. what a F32 write/read cycle yields.
Matrix quantize_f32(const Matrix& x);

void write_u64s(const std::filesystem::path& path, std::span<const std::uint64_t> values);
std::vector<std::uint64_t> read_u64s(const std::filesystem::path& path);

}  // namespace cembed

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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cembed/numerics.hpp"
#include "cembed/rng.hpp"

namespace cembed {

/// Parameters of the linear-plus-noise world that stands in for the vision
/// and text encoders.
struct WorldConfig {
  std::uint64_t seed = 42;
  Eigen::Index frame_dim = 64;    // D
  Eigen::Index concept_dim = 32;  // d
  Eigen::Index frames = 8;        // T
  double noise_sigma = 0.1;
  double drift_scale = 0.5;
  Eigen::Index bank_size = 0;     // 0: one caption per sample
};

/// frames_t = W z + drift_t + noise for a caption embedding z from the bank.
struct SyntheticWorld {
  WorldConfig config;
  Matrix mixing;        // D x d
  Matrix drift;         // T x D, row 0 is zero
  Matrix caption_bank;  // bank_size x d, row norms in [0.5, 2.0]
};

/// Builds the mixing matrix, drift and caption bank from config.seed.
/// `bank_size` must be positive here (callers resolve the 0 default).
SyntheticWorld make_world(const WorldConfig& config);

/// Paired frames/target samples. Frames for sample i occupy rows
/// [i*T, (i+1)*T) of `frames`.
struct Dataset {
  Eigen::Index frames_per_sample = 0;
  Matrix frames;                            // (n*T) x D
  Matrix targets;                           // n x d
  std::vector<std::uint64_t> caption_ids;   // n

  Eigen::Index size() const { return targets.rows(); }
  Eigen::Index frame_dim() const { return frames.cols(); }
  Eigen::Index concept_dim() const { return targets.cols(); }
  auto sample_frames(Eigen::Index i) const {
    return frames.middleRows(i * frames_per_sample, frames_per_sample);
  }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

Dataset gen_synthetic_pairs(const SyntheticWorld& world, Eigen::Index n, SeededRng& rng);

/// Row-wise mean of each sample's frames (n x D).
Matrix mean_pooled_frames(const Dataset& ds);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train, val, test;
};

/// Largest-remainder sizes for `n` items, ties going to the earlier part.
std::array<Eigen::Index, 3> split_sizes(Eigen::Index n, const SplitFractions& f);

/// Seeded shuffle followed by a largest-remainder partition.
DatasetSplit split(const Dataset& ds, const SplitFractions& f, std::uint64_t seed);

/// A dataset directory on disk together with its world description.
struct StoredDataset {
  Dataset data;
  Matrix caption_bank;
  WorldConfig world;
};

/// Writes manifest.json, frames.bin, targets.bin, ids.bin and bank.bin.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const SyntheticWorld& world);
StoredDataset load_dataset(const std::filesystem::path& dir);

/// One curriculum stage: plain configuration pointing at a dataset directory.
struct CurriculumStage {
  std::string name;
  std::filesystem::path dataset_path;
  std::uint64_t epochs = 1;
  std::uint64_t batch_size = 32;
  std::optional<double> lr_projector;
  std::optional<double> lr_encoder_adapter;
  std::optional<std::uint64_t> warmup_steps;
};

CurriculumStage load_stage(const std::filesystem::path& json_path);
void save_stage(const std::filesystem::path& json_path, const CurriculumStage& stage);

/// Embedding sequences for next-embedding modelling.
struct SequenceCorpus {
  Eigen::Index dim = 0;
  std::vector<Matrix> sequences;                   // each L x d
  std::vector<std::vector<std::uint64_t>> ids;     // bank ids per position (may be empty)
  std::vector<std::vector<std::uint8_t>> tags;     // modality tag per position (may be empty)
};

/// Sequences over a bank following next = successor[previous], with random
/// starting entries. `successor` is a fixed seeded permutation of the bank.
struct RuleSequenceConfig {
  std::uint64_t seed = 7;
  Eigen::Index bank_size = 64;
  Eigen::Index dim = 16;
  Eigen::Index length = 4;
  Eigen::Index count = 512;
};

struct RuleWorld {
  Matrix bank;                          // bank_size x dim
  std::vector<std::uint64_t> successor; // permutation of [0, bank_size)
};

RuleWorld make_rule_world(const RuleSequenceConfig& cfg);
// Positions 0..L-2 are uniform draws from the bank; the last element is successor[ids[L-2]].
SequenceCorpus gen_rule_sequences(const RuleWorld& world, Eigen::Index count, Eigen::Index length,
                                  SeededRng& rng);

/// Bank rows: uniform direction times a norm uniform in [0.5, 2.0].
Matrix make_caption_bank(Eigen::Index n, Eigen::Index dim, SeededRng& rng);

void save_sequences(const std::filesystem::path& dir, const SequenceCorpus& corpus,
                    const Matrix& bank);
SequenceCorpus load_sequences(const std::filesystem::path& dir, Matrix* bank = nullptr);

}  // namespace cembed

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
#include <string>
#include <vector>

#include "cembed/corpus.hpp"
#include "cembed/projector.hpp"

namespace cembed {

/// Teacher-student alignment settings. Field names double as the JSON keys of
/// the training config file.
struct AlignConfig {
  double lambda_con = 0.0;          // weight of the contrastive term; 0 disables it
  double tau = 0.07;
  double lr_projector = 1e-4;
  double lr_encoder_adapter = 1e-5;
  std::uint64_t freeze_steps = 200;
  std::uint64_t warmup_steps = 50;
  std::uint64_t max_epochs = 15;
  std::uint64_t patience = 3;
  std::uint64_t batch_size = 32;
  std::uint64_t seed = 42;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// A loss value with its gradients. The teacher-side gradient is reported for
/// verification only; training never applies it.
struct LossResult {
  double loss = 0.0;
  Matrix grad_student;  // dL/dZv
  Matrix grad_teacher;  // dL/dZt
};

/// (1/B) sum_i ||zv_i - zt_i||^2
LossResult mse_align_loss(const Matrix& zv, const Matrix& zt);

/// -(1/B) sum_i log softmax_j(cos(zv_i, zt_j) / tau)[i]
LossResult infonce_loss(const Matrix& zv, const Matrix& zt, double tau);

/// mse + lambda_con * infonce; the contrastive term is not evaluated when lambda_con == 0.
LossResult combined_loss(const Matrix& zv, const Matrix& zt, const AlignConfig& cfg);

struct LearningRates {
  double projector = 0.0;
  double encoder_adapter = 0.0;
};

/// Warmup then cosine decay to zero. The adapter rate is zero while
/// `global_step` (defaults to `step`) is below freeze_steps.
LearningRates lr_schedule(std::uint64_t step, std::uint64_t total_steps, const AlignConfig& cfg);
LearningRates lr_schedule(std::uint64_t step, std::uint64_t total_steps, const AlignConfig& cfg,
                          std::uint64_t global_step);

struct StepRecord {
  std::uint64_t step = 0;
  int phase = 1;  // 1: adapter frozen, 2: joint
  double lr_proj = 0.0;
  double lr_enc = 0.0;
  double loss = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpochRecord {
  std::uint64_t epoch = 0;  // 0 is the pre-training evaluation
  double val_mse = 0.0;
  double val_cos = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::uint64_t best_epoch = 0;
  bool stopped_early = false;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct ValidationMetrics {
  double mse = 0.0;
  double cos = 0.0;
};

ValidationMetrics validate(const ProjectorParams& params, const ProjectorConfig& pcfg, const Dataset& val);

struct StageResult {
  ProjectorParams params;  // best-validation parameters
  TrainHistory history;
  std::uint64_t steps_taken = 0;
};

/// Trains for up to cfg.max_epochs with early stopping on validation MSE.
/// `global_step_offset` carries the freeze window across curriculum stages.
StageResult train_stage(const Dataset& train, const Dataset& val, ProjectorParams params,
                        const ProjectorConfig& pcfg, const AlignConfig& cfg,
                        std::uint64_t global_step_offset = 0);

struct StageData {
  CurriculumStage stage;
  Dataset train;
  Dataset val;
};

struct CurriculumResult {
  ProjectorParams params;
  std::vector<TrainHistory> histories;
};

/// Runs the stages in order. Parameters carry over; optimizer state does not.
CurriculumResult run_curriculum(const std::vector<StageData>& stages, ProjectorParams params,
                                const ProjectorConfig& pcfg, const AlignConfig& cfg);

/// Writes <prefix>_steps.csv and <prefix>_epochs.csv.
void write_history_csv(const std::filesystem::path& prefix, const TrainHistory& h);

}  // namespace cembed

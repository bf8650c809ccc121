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

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cembed/aligner.hpp"
#include "cembed/latentdiff.hpp"
#include "cembed/params.hpp"
#include "cembed/projector.hpp"
#include "cembed/tensor_io.hpp"

namespace cembed {

using Json = nlohmann::ordered_json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

Json to_json(const ProjectorConfig& c);
ProjectorConfig projector_config_from_json(const Json& j, ProjectorConfig base = {});
Json to_json(const AlignConfig& c);
AlignConfig align_config_from_json(const Json& j, AlignConfig base = {});
Json to_json(const LcmModelConfig& c);
LcmModelConfig lcm_model_config_from_json(const Json& j, LcmModelConfig base = {});
Json to_json(const LcmTrainConfig& c);
LcmTrainConfig lcm_train_config_from_json(const Json& j, LcmTrainConfig base = {});

/// Writes one f64 embedding file per non-empty tensor, named "<tensor>.bin",
/// and returns {name: [rows, cols]} for the manifest.
template <class P>
Json save_tensors(const std::filesystem::path& dir, const P& params) {
  std::filesystem::create_directories(dir);
  Json shapes = Json::object();
  params.visit([&](const std::string& name, const Matrix& t) {
    shapes[name] = {t.rows(), t.cols()};
    if (t.size() > 0) write_embeddings(dir / (name + ".bin"), t, Dtype::F64);
  });
  return shapes;
}

/// Fills tensors of an already-shaped parameter struct; shapes must match.
template <class P>
void load_tensors(const std::filesystem::path& dir, P& params) {
  params.visit([&](const std::string& name, Matrix& t) {
    if (t.size() == 0) return;
    Matrix loaded = read_embeddings(dir / (name + ".bin"));
    if (loaded.rows() != t.rows() || loaded.cols() != t.cols()) {
      throw FormatError((dir / (name + ".bin")).string() + ": shape " + std::to_string(loaded.rows()) +
                        "x" + std::to_string(loaded.cols()) + ", expected " + std::to_string(t.rows()) +
                        "x" + std::to_string(t.cols()));
    }
    t = std::move(loaded);
  });
}

struct ProjectorCheckpoint {
  ProjectorConfig config;
  ProjectorParams params;
  std::uint64_t seed = 0;
};

/// Directory with params.json (config, seed, tensor shapes) and one file per tensor.
void save_projector(const std::filesystem::path& dir, const ProjectorCheckpoint& ckpt);
ProjectorCheckpoint load_projector(const std::filesystem::path& dir);

struct LcmCheckpoint {
  LcmModelConfig model;
  LcmTrainConfig train;
  Eigen::Index schedule_steps = 100;
  double lambda_max = 10.0;
  double lambda_min = -10.0;
  LcmTrainerState state;
};

/// Stores parameters, best parameters, optimizer moments, rng state and the
/// history so far.
void save_lcm(const std::filesystem::path& dir, const LcmCheckpoint& ckpt);
LcmCheckpoint load_lcm(const std::filesystem::path& dir);

}  // namespace cembed

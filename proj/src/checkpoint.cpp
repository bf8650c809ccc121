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

#include "cembed/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cembed {
namespace fs = std::filesystem;

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw FormatError(std::string("config field '") + key + "': " + e.what());
  }
}

void check_keys(const Json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* kk : known) ok = ok || k == kk;
    if (!ok) throw FormatError(std::string(what) + ": unknown field '" + k + "'");
  }
}

// Doubles are written with 17 significant digits, which round-trips exactly.
std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc()) throw FormatError("bad number '" + s + "' in history file");
  return v;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

Json to_json(const ProjectorConfig& c) {
  return Json{{"frame_dim", c.frame_dim},
              {"concept_dim", c.concept_dim},
              {"heads", c.heads},
              {"dropout_p", c.dropout_p},
              {"pooling", to_string(c.pooling)},
              {"init_sigma", c.init_sigma},
              {"temporal_attention", c.temporal_attention},
              {"positional_encoding", c.positional_encoding},
              {"encoder_adapter", c.encoder_adapter}};
}

ProjectorConfig projector_config_from_json(const Json& j, ProjectorConfig c) {
  check_keys(j,
             {"frame_dim", "concept_dim", "heads", "dropout_p", "pooling", "init_sigma",
              "temporal_attention", "positional_encoding", "encoder_adapter"},
             "projector config");
  read_field(j, "frame_dim", c.frame_dim);
  read_field(j, "concept_dim", c.concept_dim);
  read_field(j, "heads", c.heads);
  read_field(j, "dropout_p", c.dropout_p);
  if (j.contains("pooling")) c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  read_field(j, "init_sigma", c.init_sigma);
  read_field(j, "temporal_attention", c.temporal_attention);
  read_field(j, "positional_encoding", c.positional_encoding);
  read_field(j, "encoder_adapter", c.encoder_adapter);
  c.validate();
  return c;
}

Json to_json(const AlignConfig& c) {
  return Json{{"lambda_con", c.lambda_con},
              {"tau", c.tau},
              {"lr_projector", c.lr_projector},
              {"lr_encoder_adapter", c.lr_encoder_adapter},
              {"freeze_steps", c.freeze_steps},
              {"warmup_steps", c.warmup_steps},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"weight_decay", c.weight_decay},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps}};
}

AlignConfig align_config_from_json(const Json& j, AlignConfig c) {
  check_keys(j,
             {"lambda_con", "tau", "lr_projector", "lr_encoder_adapter", "freeze_steps", "warmup_steps",
              "max_epochs", "patience", "batch_size", "seed", "weight_decay", "beta1", "beta2", "adam_eps"},
             "align config");
  read_field(j, "lambda_con", c.lambda_con);
  read_field(j, "tau", c.tau);
  read_field(j, "lr_projector", c.lr_projector);
  read_field(j, "lr_encoder_adapter", c.lr_encoder_adapter);
  read_field(j, "freeze_steps", c.freeze_steps);
  read_field(j, "warmup_steps", c.warmup_steps);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "seed", c.seed);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "beta1", c.beta1);
  read_field(j, "beta2", c.beta2);
  read_field(j, "adam_eps", c.adam_eps);
  c.validate();
  return c;
}

Json to_json(const LcmModelConfig& c) {
  return Json{{"dim", c.dim},
              {"ctx_layers", c.ctx_layers},
              {"ctx_width", c.ctx_width},
              {"ctx_heads", c.ctx_heads},
              {"ctx_ffn", c.ctx_ffn},
              {"den_depth", c.den_depth},
              {"den_width", c.den_width},
              {"time_dim", c.time_dim},
              {"init_sigma", c.init_sigma},
              {"zero_output_head", c.zero_output_head},
              {"use_modality_tags", c.use_modality_tags},
              {"modality_count", c.modality_count}};
}

LcmModelConfig lcm_model_config_from_json(const Json& j, LcmModelConfig c) {
  check_keys(j,
             {"dim", "ctx_layers", "ctx_width", "ctx_heads", "ctx_ffn", "den_depth", "den_width", "time_dim",
              "init_sigma", "zero_output_head", "use_modality_tags", "modality_count"},
             "lcm model config");
  read_field(j, "dim", c.dim);
  read_field(j, "ctx_layers", c.ctx_layers);
  read_field(j, "ctx_width", c.ctx_width);
  read_field(j, "ctx_heads", c.ctx_heads);
  read_field(j, "ctx_ffn", c.ctx_ffn);
  read_field(j, "den_depth", c.den_depth);
  read_field(j, "den_width", c.den_width);
  read_field(j, "time_dim", c.time_dim);
  read_field(j, "init_sigma", c.init_sigma);
  read_field(j, "zero_output_head", c.zero_output_head);
  read_field(j, "use_modality_tags", c.use_modality_tags);
  read_field(j, "modality_count", c.modality_count);
  c.validate();
  return c;
}

Json to_json(const LcmTrainConfig& c) {
  return Json{{"guidance_p", c.guidance_p},
              {"lr", c.lr},
              {"warmup", c.warmup},
              {"final_lr", c.final_lr},
              {"weight_decay", c.weight_decay},
              {"adam_eps", c.adam_eps},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"grad_clip", c.grad_clip},
              {"max_steps", c.max_steps},
              {"batch_size", c.batch_size},
              {"ckpt_every", c.ckpt_every},
              {"seed", c.seed},
              {"squared_loss", c.squared_loss},
              {"final_position_only", c.final_position_only}};
}

LcmTrainConfig lcm_train_config_from_json(const Json& j, LcmTrainConfig c) {
  check_keys(j,
             {"guidance_p", "lr", "warmup", "final_lr", "weight_decay", "adam_eps", "beta1", "beta2",
              "grad_clip", "max_steps", "batch_size", "ckpt_every", "seed", "squared_loss",
              "final_position_only"},
             "lcm train config");
  read_field(j, "guidance_p", c.guidance_p);
  read_field(j, "lr", c.lr);
  read_field(j, "warmup", c.warmup);
  read_field(j, "final_lr", c.final_lr);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "adam_eps", c.adam_eps);
  read_field(j, "beta1", c.beta1);
  read_field(j, "beta2", c.beta2);
  read_field(j, "grad_clip", c.grad_clip);
  read_field(j, "max_steps", c.max_steps);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "ckpt_every", c.ckpt_every);
  read_field(j, "seed", c.seed);
  read_field(j, "squared_loss", c.squared_loss);
  read_field(j, "final_position_only", c.final_position_only);
  c.validate();
  return c;
}

void save_projector(const fs::path& dir, const ProjectorCheckpoint& ckpt) {
  fs::create_directories(dir);
  Json j;
  j["format"] = "cembed-projector";
  j["version"] = 1;
  j["config"] = to_json(ckpt.config);
  j["seed"] = ckpt.seed;
  j["tensors"] = save_tensors(dir, ckpt.params);
  write_json_file(dir / "params.json", j);
}

ProjectorCheckpoint load_projector(const fs::path& dir) {
  const Json j = read_json_file(dir / "params.json");
  if (j.value("format", "") != "cembed-projector") {
    throw FormatError((dir / "params.json").string() + ": not a projector checkpoint");
  }
  ProjectorCheckpoint c;
  c.config = projector_config_from_json(j.at("config"));
  c.seed = j.value("seed", std::uint64_t{0});
  SeededRng rng(0);
  c.params = init_projector(c.config, rng);
  load_tensors(dir, c.params);
  return c;
}

void save_lcm(const fs::path& dir, const LcmCheckpoint& ckpt) {
  fs::create_directories(dir);
  const auto& st = ckpt.state;
  Json j;
  j["format"] = "cembed-lcm";
  j["version"] = 1;
  j["model"] = to_json(ckpt.model);
  j["train"] = to_json(ckpt.train);
  j["schedule"] = {{"steps", ckpt.schedule_steps},
                   {"lambda_max", ckpt.lambda_max},
                   {"lambda_min", ckpt.lambda_min}};
  j["step"] = st.step;
  j["rng_state"] = st.rng_state;
  j["best_val"] = fmt(st.best_val);
  j["best_step"] = st.best_step;
  j["adam_steps"] = st.adam_steps;
  j["tensors"] = save_tensors(dir / "params", st.params);
  save_tensors(dir / "best", st.best_params);
  if (st.adam_m.ctx_in_w.size() > 0) {
    save_tensors(dir / "adam_m", st.adam_m);
    save_tensors(dir / "adam_v", st.adam_v);
  }
  write_json_file(dir / "params.json", j);

  std::ofstream s(dir / "history_steps.csv", std::ios::trunc);
  s << "step,lr,loss,grad_norm,clipped_norm,dropped\n";
  for (const auto& r : st.history.steps) {
    s << r.step << ',' << fmt(r.lr) << ',' << fmt(r.loss) << ',' << fmt(r.grad_norm) << ','
      << fmt(r.clipped_norm) << ',' << r.dropped << '\n';
  }
  std::ofstream e(dir / "history_evals.csv", std::ios::trunc);
  e << "step,val_loss\n";
  for (const auto& r : st.history.evals) e << r.step << ',' << fmt(r.val_loss) << '\n';
  if (!s || !e) throw IoError("write failed for history in " + dir.string());
}

LcmCheckpoint load_lcm(const fs::path& dir) {
  const Json j = read_json_file(dir / "params.json");
  if (j.value("format", "") != "cembed-lcm") {
    throw FormatError((dir / "params.json").string() + ": not an LCM checkpoint");
  }
  LcmCheckpoint c;
  try {
    c.model = lcm_model_config_from_json(j.at("model"));
    c.train = lcm_train_config_from_json(j.at("train"));
    c.schedule_steps = j.at("schedule").at("steps").get<Eigen::Index>();
    c.lambda_max = j.at("schedule").at("lambda_max").get<double>();
    c.lambda_min = j.at("schedule").at("lambda_min").get<double>();
    auto& st = c.state;
    st.step = j.at("step").get<std::uint64_t>();
    st.rng_state = j.at("rng_state").get<std::string>();
    st.best_val = parse_double(j.at("best_val").get<std::string>());
    st.best_step = j.at("best_step").get<std::uint64_t>();
    st.adam_steps = j.at("adam_steps").get<std::vector<std::uint64_t>>();
  } catch (const Json::exception& e) {
    throw FormatError((dir / "params.json").string() + ": " + e.what());
  }
  auto& st = c.state;
  SeededRng rng(0);
  st.params = init_two_tower(c.model, rng);
  load_tensors(dir / "params", st.params);
  st.best_params = st.params;
  load_tensors(dir / "best", st.best_params);
  if (fs::exists(dir / "adam_m")) {
    st.adam_m = zeros_like(st.params);
    st.adam_v = zeros_like(st.params);
    load_tensors(dir / "adam_m", st.adam_m);
    load_tensors(dir / "adam_v", st.adam_v);
  }
  for (const auto& row : read_csv(dir / "history_steps.csv")) {
    if (row.size() != 6) throw FormatError((dir / "history_steps.csv").string() + ": bad row");
    st.history.steps.push_back({std::stoull(row[0]), parse_double(row[1]), parse_double(row[2]),
                                parse_double(row[3]), parse_double(row[4]), std::stoull(row[5])});
  }
  for (const auto& row : read_csv(dir / "history_evals.csv")) {
    if (row.size() != 2) throw FormatError((dir / "history_evals.csv").string() + ": bad row");
    st.history.evals.push_back({std::stoull(row[0]), parse_double(row[1])});
  }
  return c;
}

}  // namespace cembed

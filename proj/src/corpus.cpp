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

#include "cembed/corpus.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "cembed/tensor_io.hpp"

namespace cembed {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, SeededRng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

Matrix make_caption_bank(Eigen::Index n, Eigen::Index dim, SeededRng& rng) {
  Matrix bank(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    RowVector dir(dim);
    do {
      for (Eigen::Index j = 0; j < dim; ++j) dir(j) = rng.normal();
    } while (dir.norm() == 0.0);
    const double norm = 0.5 + 1.5 * rng.uniform();
    bank.row(i) = dir * (norm / dir.norm());
  }
  return bank;
}

SyntheticWorld make_world(const WorldConfig& config) {
  if (config.frame_dim <= 0 || config.concept_dim <= 0 || config.frames <= 0) {
    throw InvalidArgument("make_world: dimensions and frame count must be positive");
  }
  if (config.bank_size <= 0) throw InvalidArgument("make_world: bank_size must be positive");
  if (!(config.noise_sigma >= 0)) throw InvalidArgument("make_world: noise_sigma must be >= 0");
  SeededRng rng(config.seed);
  SyntheticWorld w;
  w.config = config;
  w.mixing = gaussian_sample(rng, config.frame_dim, config.concept_dim, 0.0,
                             1.0 / std::sqrt(static_cast<double>(config.concept_dim)));
  w.drift.resize(config.frames, config.frame_dim);
  for (Eigen::Index j = 0; j < config.frame_dim; ++j) {
    const double freq = 0.2 + 1.3 * rng.uniform();
    for (Eigen::Index t = 0; t < config.frames; ++t) {
      w.drift(t, j) = config.drift_scale * std::sin(freq * static_cast<double>(t));
    }
  }
  w.caption_bank = make_caption_bank(config.bank_size, config.concept_dim, rng);
  return w;
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.frames_per_sample = frames_per_sample;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.frames.resize(n * frames_per_sample, frame_dim());
  out.targets.resize(n, concept_dim());
  out.caption_ids.resize(rows.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    out.frames.middleRows(k * frames_per_sample, frames_per_sample) = sample_frames(i);
    out.targets.row(k) = targets.row(i);
    out.caption_ids[static_cast<std::size_t>(k)] = caption_ids[static_cast<std::size_t>(i)];
  }
  return out;
}

Dataset gen_synthetic_pairs(const SyntheticWorld& world, Eigen::Index n, SeededRng& rng) {
  if (n < 1) throw InvalidArgument("gen_synthetic_pairs: n must be >= 1");
  const Eigen::Index bank = world.caption_bank.rows();
  const Eigen::Index T = world.drift.rows();
  const Eigen::Index D = world.mixing.rows();
  std::vector<std::uint64_t> ids(static_cast<std::size_t>(n));
  if (n <= bank) {
    const auto perm = shuffled_indices(bank, rng);
    for (Eigen::Index i = 0; i < n; ++i) ids[i] = static_cast<std::uint64_t>(perm[i]);
  } else {
    for (auto& id : ids) id = rng.uniform_index(static_cast<std::uint64_t>(bank));
  }
  Dataset ds;
  ds.frames_per_sample = T;
  ds.frames.resize(n * T, D);
  ds.targets.resize(n, world.caption_bank.cols());
  ds.caption_ids = ids;
  const double sigma = world.config.noise_sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto z = world.caption_bank.row(static_cast<Eigen::Index>(ids[i]));
    ds.targets.row(i) = z;
    const RowVector clean = (world.mixing * z.transpose()).transpose();
    for (Eigen::Index t = 0; t < T; ++t) {
      auto row = ds.frames.row(i * T + t);
      row = clean + world.drift.row(t);
      if (sigma > 0) {
        for (Eigen::Index j = 0; j < D; ++j) row(j) += sigma * rng.normal();
      }
    }
  }
  return ds;
}

Matrix mean_pooled_frames(const Dataset& ds) {
  Matrix out(ds.size(), ds.frame_dim());
  for (Eigen::Index i = 0; i < ds.size(); ++i) out.row(i) = ds.sample_frames(i).colwise().mean();
  return out;
}

std::array<Eigen::Index, 3> split_sizes(Eigen::Index n, const SplitFractions& f) {
  const std::array<double, 3> fr{f.train, f.val, f.test};
  for (double x : fr) {
    if (!(x > 0)) throw InvalidArgument("split: fractions must be positive");
  }
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) {
    throw InvalidArgument("split: fractions must sum to 1");
  }
  std::array<Eigen::Index, 3> sizes{};
  std::array<double, 3> rem{};
  Eigen::Index assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fr[k] * static_cast<double>(n);
    sizes[k] = static_cast<Eigen::Index>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(sizes[k]);
    assigned += sizes[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (rem[k] > rem[best]) best = k;
    }
    ++sizes[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

DatasetSplit split(const Dataset& ds, const SplitFractions& f, std::uint64_t seed) {
  if (ds.size() == 0) throw InvalidArgument("split: empty dataset");
  const auto sizes = split_sizes(ds.size(), f);
  SeededRng rng(seed);
  const auto perm = shuffled_indices(ds.size(), rng);
  auto part = [&](std::size_t begin, std::size_t len) {
    return ds.subset(std::vector<Eigen::Index>(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                                               perm.begin() + static_cast<std::ptrdiff_t>(begin + len)));
  };
  const auto a = static_cast<std::size_t>(sizes[0]);
  const auto b = static_cast<std::size_t>(sizes[1]);
  const auto c = static_cast<std::size_t>(sizes[2]);
  return DatasetSplit{part(0, a), part(a, b), part(a + b, c)};
}

void save_dataset(const fs::path& dir, const Dataset& ds, const SyntheticWorld& world) {
  ensure_dir(dir);
  const auto& c = world.config;
  json m;
  m["format"] = "cembed-dataset";
  m["version"] = 1;
  m["count"] = ds.size();
  m["frames"] = ds.frames_per_sample;
  m["frame_dim"] = ds.frame_dim();
  m["concept_dim"] = ds.concept_dim();
  m["bank_size"] = world.caption_bank.rows();
  m["world"] = {{"seed", c.seed},
                {"frame_dim", c.frame_dim},
                {"concept_dim", c.concept_dim},
                {"frames", c.frames},
                {"noise_sigma", c.noise_sigma},
                {"drift_scale", c.drift_scale},
                {"bank_size", c.bank_size}};
  write_json(dir / "manifest.json", m);
  write_embeddings(dir / "frames.bin", ds.frames);
  write_embeddings(dir / "targets.bin", ds.targets);
  write_u64s(dir / "ids.bin", ds.caption_ids);
  write_embeddings(dir / "bank.bin", world.caption_bank);
}

StoredDataset load_dataset(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  StoredDataset out;
  try {
    if (m.at("format") != "cembed-dataset") throw FormatError(dir.string() + ": not a dataset");
    const auto& w = m.at("world");
    out.world.seed = w.at("seed").get<std::uint64_t>();
    out.world.frame_dim = w.at("frame_dim").get<Eigen::Index>();
    out.world.concept_dim = w.at("concept_dim").get<Eigen::Index>();
    out.world.frames = w.at("frames").get<Eigen::Index>();
    out.world.noise_sigma = w.at("noise_sigma").get<double>();
    out.world.drift_scale = w.at("drift_scale").get<double>();
    out.world.bank_size = w.at("bank_size").get<Eigen::Index>();
    out.data.frames_per_sample = m.at("frames").get<Eigen::Index>();
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  out.data.frames = read_embeddings(dir / "frames.bin");
  out.data.targets = read_embeddings(dir / "targets.bin");
  out.data.caption_ids = read_u64s(dir / "ids.bin");
  out.caption_bank = read_embeddings(dir / "bank.bin");
  const auto n = out.data.targets.rows();
  if (out.data.frames.rows() != n * out.data.frames_per_sample ||
      static_cast<Eigen::Index>(out.data.caption_ids.size()) != n ||
      m.at("count").get<Eigen::Index>() != n) {
    throw FormatError(dir.string() + ": inconsistent sample counts across files");
  }
  return out;
}

CurriculumStage load_stage(const fs::path& json_path) {
  const json j = read_json(json_path);
  CurriculumStage s;
  try {
    s.name = j.at("name").get<std::string>();
    fs::path p = j.at("dataset").get<std::string>();
    s.dataset_path = p.is_absolute() ? p : json_path.parent_path() / p;
    s.epochs = j.value("epochs", std::uint64_t{1});
    s.batch_size = j.value("batch_size", std::uint64_t{32});
    if (j.contains("lr_projector")) s.lr_projector = j["lr_projector"].get<double>();
    if (j.contains("lr_encoder_adapter")) s.lr_encoder_adapter = j["lr_encoder_adapter"].get<double>();
    if (j.contains("warmup_steps")) s.warmup_steps = j["warmup_steps"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  if (s.epochs < 1 || s.batch_size < 1) {
    throw InvalidArgument(json_path.string() + ": epochs and batch_size must be >= 1");
  }
  return s;
}

void save_stage(const fs::path& json_path, const CurriculumStage& s) {
  json j;
  j["name"] = s.name;
  j["dataset"] = s.dataset_path.string();
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  if (s.lr_projector) j["lr_projector"] = *s.lr_projector;
  if (s.lr_encoder_adapter) j["lr_encoder_adapter"] = *s.lr_encoder_adapter;
  if (s.warmup_steps) j["warmup_steps"] = *s.warmup_steps;
  write_json(json_path, j);
}

RuleWorld make_rule_world(const RuleSequenceConfig& cfg) {
  if (cfg.bank_size < 2 || cfg.dim < 1) throw InvalidArgument("make_rule_world: bad sizes");
  SeededRng rng(cfg.seed);
  RuleWorld w;
  w.bank = make_caption_bank(cfg.bank_size, cfg.dim, rng);
  const auto perm = shuffled_indices(cfg.bank_size, rng);
  w.successor.assign(perm.begin(), perm.end());
  return w;
}

SequenceCorpus gen_rule_sequences(const RuleWorld& world, Eigen::Index count, Eigen::Index length,
                                  SeededRng& rng) {
  if (count < 1 || length < 2) throw InvalidArgument("gen_rule_sequences: need count >= 1, length >= 2");
  SequenceCorpus c;
  c.dim = world.bank.cols();
  const auto bank = static_cast<std::uint64_t>(world.bank.rows());
  for (Eigen::Index s = 0; s < count; ++s) {
    Matrix seq(length, c.dim);
    std::vector<std::uint64_t> ids(static_cast<std::size_t>(length));
    for (Eigen::Index p = 0; p + 1 < length; ++p) ids[p] = rng.uniform_index(bank);
    ids[length - 1] = world.successor[ids[length - 2]];
    for (Eigen::Index p = 0; p < length; ++p) seq.row(p) = world.bank.row(static_cast<Eigen::Index>(ids[p]));
    c.sequences.push_back(std::move(seq));
    c.ids.push_back(std::move(ids));
  }
  return c;
}

void save_sequences(const fs::path& dir, const SequenceCorpus& corpus, const Matrix& bank) {
  ensure_dir(dir);
  Eigen::Index total = 0;
  std::vector<std::uint64_t> lengths;
  for (const auto& s : corpus.sequences) {
    total += s.rows();
    lengths.push_back(static_cast<std::uint64_t>(s.rows()));
  }
  Matrix all(total, corpus.dim);
  std::vector<std::uint64_t> ids;
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < corpus.sequences.size(); ++k) {
    all.middleRows(r, corpus.sequences[k].rows()) = corpus.sequences[k];
    r += corpus.sequences[k].rows();
    if (k < corpus.ids.size()) ids.insert(ids.end(), corpus.ids[k].begin(), corpus.ids[k].end());
  }
  json m;
  m["format"] = "cembed-sequences";
  m["version"] = 1;
  m["dim"] = corpus.dim;
  m["count"] = corpus.sequences.size();
  m["rows"] = total;
  m["has_ids"] = static_cast<Eigen::Index>(ids.size()) == total && total > 0;
  write_json(dir / "manifest.json", m);
  write_embeddings(dir / "embeddings.bin", all);
  write_u64s(dir / "lengths.bin", lengths);
  if (m["has_ids"].get<bool>()) write_u64s(dir / "ids.bin", ids);
  if (bank.size() > 0) write_embeddings(dir / "bank.bin", bank);
}

SequenceCorpus load_sequences(const fs::path& dir, Matrix* bank) {
  const json m = read_json(dir / "manifest.json");
  if (m.value("format", "") != "cembed-sequences") {
    throw FormatError(dir.string() + ": not a sequence corpus");
  }
  const Matrix all = read_embeddings(dir / "embeddings.bin");
  const auto lengths = read_u64s(dir / "lengths.bin");
  std::vector<std::uint64_t> ids;
  if (m.value("has_ids", false)) ids = read_u64s(dir / "ids.bin");
  SequenceCorpus c;
  c.dim = all.cols();
  Eigen::Index r = 0;
  for (auto len : lengths) {
    const auto L = static_cast<Eigen::Index>(len);
    if (r + L > all.rows()) throw FormatError(dir.string() + ": lengths exceed embedding rows");
    c.sequences.push_back(all.middleRows(r, L));
    if (!ids.empty()) {
      c.ids.emplace_back(ids.begin() + r, ids.begin() + r + L);
    }
    r += L;
  }
  if (r != all.rows()) throw FormatError(dir.string() + ": lengths do not cover embedding rows");
  if (bank != nullptr && fs::exists(dir / "bank.bin")) *bank = read_embeddings(dir / "bank.bin");
  return c;
}

}  // namespace cembed

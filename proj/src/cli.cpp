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

#include "cembed/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "cembed/aligner.hpp"
#include "cembed/checkpoint.hpp"
#include "cembed/corpus.hpp"
#include "cembed/latentdiff.hpp"
#include "cembed/spaceval.hpp"
#include "cembed/tensor_io.hpp"

namespace cembed {
namespace fs = std::filesystem;

namespace {

struct GenOptions {
  std::uint64_t seed = 42;
  long long n = 2000;
  long long frames = 8;
  long long dim_frame = 64;
  long long dim_concept = 32;
  double noise = 0.1;
  double drift = 0.5;
  long long bank_size = 0;
  std::string out;
};

struct GenSeqOptions {
  std::uint64_t seed = 7;
  long long bank_size = 64;
  long long dim = 16;
  long long length = 3;
  long long count = 1024;
  std::string out;
};

struct AlignOptions {
  std::string config;
  std::vector<std::string> stages;
  std::string out;
};

struct TrainLcmOptions {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  long long ckpt_every = 0;
  long long max_steps = 0;
};

struct SampleOptions {
  std::string lcm;
  std::string prefix;
  long long steps = 0;
  double guidance = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string bank;
  bool stochastic = false;
  bool final_params = false;
};

struct EvalOptions {
  std::string projector;
  std::string data;
  std::string out;
  std::string split = "test";
  std::uint64_t split_seed = 0;
  std::string drift;
};

void write_resolved(const fs::path& dir, const Json& j) {
  fs::create_directories(dir);
  write_json_file(dir / "resolved-config.json", j);
}

fs::path parent_or_cwd(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

Json split_json(const SplitFractions& f, std::uint64_t seed) {
  return Json{{"train", f.train}, {"val", f.val}, {"test", f.test}, {"seed", seed}};
}

int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (o.n < 1) throw InvalidArgument("--n must be >= 1");
  if (o.frames < 1 || o.dim_frame < 1 || o.dim_concept < 1) {
    throw InvalidArgument("--frames, --dim-frame and --dim-concept must be >= 1");
  }
  if (o.noise < 0) throw InvalidArgument("--noise must be >= 0");
  if (o.bank_size < 0) throw InvalidArgument("--bank-size must be >= 0");
  WorldConfig wc;
  wc.seed = o.seed;
  wc.frame_dim = o.dim_frame;
  wc.concept_dim = o.dim_concept;
  wc.frames = o.frames;
  wc.noise_sigma = o.noise;
  wc.drift_scale = o.drift;
  wc.bank_size = o.bank_size > 0 ? o.bank_size : o.n;
  const auto world = make_world(wc);
  SeededRng rng(o.seed + 1);
  const Dataset ds = gen_synthetic_pairs(world, o.n, rng);
  save_dataset(o.out, ds, world);
  write_resolved(o.out, Json{{"command", "gen"},
                             {"seed", o.seed},
                             {"n", o.n},
                             {"frames", o.frames},
                             {"dim_frame", o.dim_frame},
                             {"dim_concept", o.dim_concept},
                             {"noise", o.noise},
                             {"drift", o.drift},
                             {"bank_size", wc.bank_size}});
  out << "wrote " << o.out << ": count=" << ds.size() << " frames=" << o.frames << " frame_dim=" << o.dim_frame
      << " concept_dim=" << o.dim_concept << " bank=" << wc.bank_size << " noise=" << o.noise << '\n';
  return kExitOk;
}

int cmd_gen_seq(const GenSeqOptions& o, std::ostream& out) {
  if (o.count < 1 || o.length < 2 || o.bank_size < 2 || o.dim < 1) {
    throw InvalidArgument("gen-seq: need --count >= 1, --length >= 2, --bank-size >= 2, --dim >= 1");
  }
  RuleSequenceConfig rc;
  rc.seed = o.seed;
  rc.bank_size = o.bank_size;
  rc.dim = o.dim;
  rc.length = o.length;
  rc.count = o.count;
  const RuleWorld world = make_rule_world(rc);
  SeededRng rng(o.seed + 1);
  const auto corpus = gen_rule_sequences(world, o.count, o.length, rng);
  save_sequences(o.out, corpus, world.bank);
  write_resolved(o.out, Json{{"command", "gen-seq"},
                             {"seed", o.seed},
                             {"bank_size", o.bank_size},
                             {"dim", o.dim},
                             {"length", o.length},
                             {"count", o.count}});
  out << "wrote " << o.out << ": sequences=" << o.count << " length=" << o.length << " dim=" << o.dim << '\n';
  return kExitOk;
}

int cmd_align(const AlignOptions& o, std::ostream& out) {
  if (o.stages.empty()) throw InvalidArgument("--stages needs at least one stage file");
  for (const auto& s : o.stages) {
    if (!fs::exists(s)) throw InvalidArgument("stage file not found: " + s);
  }
  Json cfg = o.config.empty() ? Json::object() : read_json_file(o.config);
  const Json pj = cfg.value("projector", Json::object());
  const Json aj = cfg.value("align", Json::object());
  const Json sj = cfg.value("split", Json::object());
  SplitFractions fr{sj.value("train", 0.8), sj.value("val", 0.1), sj.value("test", 0.1)};
  const std::uint64_t split_seed = sj.value("seed", std::uint64_t{0});

  std::vector<StageData> stages;
  ProjectorConfig pcfg;
  bool have_dims = false;
  for (const auto& path : o.stages) {
    StageData sd;
    sd.stage = load_stage(path);
    const StoredDataset stored = load_dataset(sd.stage.dataset_path);
    if (!have_dims) {
      ProjectorConfig base;
      base.frame_dim = stored.data.frame_dim();
      base.concept_dim = stored.data.concept_dim();
      base.heads = std::min<Eigen::Index>(base.heads, base.frame_dim);
      while (base.frame_dim % base.heads != 0) --base.heads;
      pcfg = projector_config_from_json(pj, base);
      have_dims = true;
    }
    if (stored.data.frame_dim() != pcfg.frame_dim || stored.data.concept_dim() != pcfg.concept_dim) {
      throw InvalidArgument("stage '" + sd.stage.name + "' dataset dims do not match the projector config");
    }
    auto parts = split(stored.data, fr, split_seed);
    sd.train = std::move(parts.train);
    sd.val = std::move(parts.val);
    stages.push_back(std::move(sd));
  }
  const AlignConfig acfg = align_config_from_json(aj);

  SeededRng init_rng(acfg.seed);
  ProjectorParams params = init_projector(pcfg, init_rng);
  const auto result = run_curriculum(stages, std::move(params), pcfg, acfg);

  const fs::path root = o.out;
  fs::create_directories(root);
  save_projector(root / "checkpoint", ProjectorCheckpoint{pcfg, result.params, acfg.seed});
  Json stage_list = Json::array();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i].stage;
    const std::string prefix = std::to_string(i + 1) + "_" + st.name;
    write_history_csv(root / prefix, result.histories[i]);
    Json sjson{{"name", st.name},
               {"dataset", st.dataset_path.string()},
               {"epochs", st.epochs},
               {"batch_size", st.batch_size}};
    if (st.lr_projector) sjson["lr_projector"] = *st.lr_projector;
    if (st.lr_encoder_adapter) sjson["lr_encoder_adapter"] = *st.lr_encoder_adapter;
    if (st.warmup_steps) sjson["warmup_steps"] = *st.warmup_steps;
    stage_list.push_back(sjson);
    const auto& h = result.histories[i];
    out << "stage " << st.name << ": steps=" << h.steps.size() << " epochs=" << (h.epochs.size() - 1)
        << " best_epoch=" << h.best_epoch << " val_mse=" << h.epochs[h.best_epoch].val_mse << '\n';
  }
  write_resolved(root, Json{{"command", "align"},
                            {"projector", to_json(pcfg)},
                            {"align", to_json(acfg)},
                            {"split", split_json(fr, split_seed)},
                            {"stages", stage_list}});
  return kExitOk;
}

std::string step_dir_name(std::uint64_t step) {
  std::ostringstream os;
  os << "step_" << std::setw(6) << std::setfill('0') << step;
  return os.str();
}

int cmd_train_lcm(const TrainLcmOptions& o, std::ostream& out) {
  LcmCheckpoint ck;
  std::optional<LcmTrainerState> resume;
  Json cfg = o.config.empty() ? Json::object() : read_json_file(o.config);
  double val_fraction = cfg.value("val_fraction", 0.1);
  std::uint64_t split_seed = cfg.value("split_seed", std::uint64_t{0});
  Matrix bank;
  const SequenceCorpus corpus = load_sequences(o.data, &bank);
  if (!o.resume.empty()) {
    ck = load_lcm(o.resume);
    resume = std::move(ck.state);
  } else {
    LcmModelConfig base;
    base.dim = corpus.dim;
    ck.model = lcm_model_config_from_json(cfg.value("model", Json::object()), base);
    ck.train = lcm_train_config_from_json(cfg.value("train", Json::object()));
    const Json sch = cfg.value("schedule", Json::object());
    ck.schedule_steps = sch.value("steps", Eigen::Index{100});
    ck.lambda_max = sch.value("lambda_max", 10.0);
    ck.lambda_min = sch.value("lambda_min", -10.0);
  }
  if (o.ckpt_every > 0) ck.train.ckpt_every = static_cast<std::uint64_t>(o.ckpt_every);
  if (o.max_steps > 0) ck.train.max_steps = static_cast<std::uint64_t>(o.max_steps);
  ck.train.validate();
  if (corpus.dim != ck.model.dim) throw InvalidArgument("sequence dim does not match the model dim");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must be in [0, 1)");

  // Hold out whole sequences for validation.
  std::vector<std::size_t> order(corpus.sequences.size());
  std::iota(order.begin(), order.end(), 0);
  SeededRng srng(split_seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[srng.uniform_index(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(order.size())));
  SequenceCorpus tr, va;
  tr.dim = va.dim = corpus.dim;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < n_val ? va : tr;
    dst.sequences.push_back(corpus.sequences[order[k]]);
    if (!corpus.tags.empty()) dst.tags.push_back(corpus.tags[order[k]]);
  }
  const bool tags = ck.model.use_modality_tags;
  const auto train_items = make_items(tr, ck.train.final_position_only, tags);
  const auto val_items = make_items(va, ck.train.final_position_only, tags);
  if (train_items.empty()) throw InvalidArgument("training corpus has no (prefix, next) pairs");
  const NoiseSchedule schedule = build_schedule(ck.schedule_steps, ck.lambda_max, ck.lambda_min);

  const fs::path root = o.out;
  fs::create_directories(root / "checkpoints");
  const Json resolved{{"command", "train-lcm"},
                      {"data", o.data},
                      {"val_fraction", val_fraction},
                      {"split_seed", split_seed},
                      {"model", to_json(ck.model)},
                      {"train", to_json(ck.train)},
                      {"schedule",
                       {{"steps", ck.schedule_steps}, {"lambda_max", ck.lambda_max}, {"lambda_min", ck.lambda_min}}}};
  write_resolved(root, resolved);

  LcmCheckpoint snapshot = ck;
  auto on_ckpt = [&](const LcmTrainerState& st) {
    snapshot.state = st;
    save_lcm(root / "checkpoints" / step_dir_name(st.step), snapshot);
  };
  snapshot.state = train_lcm(train_items, val_items, ck.model, ck.train, schedule, std::move(resume), on_ckpt);
  save_lcm(root / "final", snapshot);
  const auto& h = snapshot.state.history;
  out << "trained " << snapshot.state.step << " steps; final loss=" << h.steps.back().loss
      << " best_val=" << snapshot.state.best_val << " at step " << snapshot.state.best_step << '\n';
  return kExitOk;
}

int cmd_sample(const SampleOptions& o, std::ostream& out) {
  const LcmCheckpoint ck = load_lcm(o.lcm);
  const Matrix prefix = read_embeddings(o.prefix);
  if (prefix.cols() != ck.model.dim) {
    throw InvalidArgument("prefix dim " + std::to_string(prefix.cols()) + " does not match model dim " +
                          std::to_string(ck.model.dim));
  }
  if (prefix.rows() < 1) throw InvalidArgument("prefix file has no rows");
  const NoiseSchedule schedule = build_schedule(ck.schedule_steps, ck.lambda_max, ck.lambda_min);
  SamplerOptions so;
  so.guidance_scale = o.guidance;
  so.sample_steps = o.steps;
  so.stochastic = o.stochastic;
  SeededRng rng(o.seed);
  const auto& params = o.final_params ? ck.state.params : ck.state.best_params;
  const Vector z = sample_next(params, ck.model, Prefix{prefix, {}}, schedule, so, rng);
  fs::create_directories(parent_or_cwd(o.out));
  write_embeddings(o.out, z.transpose());
  write_resolved(parent_or_cwd(o.out), Json{{"command", "sample"},
                                            {"lcm", o.lcm},
                                            {"prefix", o.prefix},
                                            {"steps", o.steps},
                                            {"guidance", o.guidance},
                                            {"seed", o.seed},
                                            {"stochastic", o.stochastic},
                                            {"params", o.final_params ? "final" : "best"},
                                            {"bank", o.bank}});
  if (!o.bank.empty()) {
    const Matrix bank = read_embeddings(o.bank);
    if (bank.cols() != ck.model.dim) throw InvalidArgument("bank dim does not match model dim");
    out << "nearest " << nearest_decode(z, bank) << '\n';
  }
  return kExitOk;
}

Json summary_json(const RetrievalSummary& s) {
  return Json{{"r1", s.r1}, {"r5", s.r5}, {"r10", s.r10}, {"mrr", s.mrr}};
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const StoredDataset stored = load_dataset(o.data);
  Dataset ds;
  if (o.split == "all") {
    ds = stored.data;
  } else {
    auto parts = split(stored.data, SplitFractions{}, o.split_seed);
    if (o.split == "train") {
      ds = std::move(parts.train);
    } else if (o.split == "val") {
      ds = std::move(parts.val);
    } else if (o.split == "test") {
      ds = std::move(parts.test);
    } else {
      throw InvalidArgument("--split must be train, val, test or all");
    }
  }
  Matrix zv;
  Json projector_echo;
  if (o.projector == "oracle") {
    zv = ds.targets;
    projector_echo = "oracle";
  } else {
    const auto ck = load_projector(o.projector);
    if (ck.config.frame_dim != ds.frame_dim() || ck.config.concept_dim != ds.concept_dim()) {
      throw InvalidArgument("checkpoint dims (" + std::to_string(ck.config.frame_dim) + ", " +
                            std::to_string(ck.config.concept_dim) + ") do not match dataset (" +
                            std::to_string(ds.frame_dim()) + ", " + std::to_string(ds.concept_dim()) + ")");
    }
    zv = project_all(ck.params, ck.config, ds.frames, ds.frames_per_sample);
    projector_echo = o.projector;
  }
  const SpaceReport r = space_report(zv, ds.targets);
  const std::map<std::string, Matrix> banks{{"caption_bank", stored.caption_bank}, {"gold", ds.targets}};
  const RoundTripReport rt = roundtrip_retrieval(zv, banks);

  Json rtj = Json::object();
  for (const auto& [name, g] : rt.groups) {
    rtj[name] = Json{{"recall_at", {{"1", g.retrieval.r1}, {"5", g.retrieval.r5}, {"10", g.retrieval.r10}}},
                     {"mrr", g.retrieval.mrr},
                     {"mean_cosine", g.mean_cosine},
                     {"mean_distance", g.mean_distance}};
  }
  Json report{{"format", "cembed-space-report"},
              {"version", 1},
              {"n", r.n},
              {"recall_at", {{"1", r.t2v.r1}, {"5", r.t2v.r5}, {"10", r.t2v.r10}}},
              {"mrr", r.t2v.mrr},
              {"v2t", summary_json(r.v2t)},
              {"ac", r.ac},
              {"ac_t2v", r.ac_t2v},
              {"ac_skipped", r.ac_skipped},
              {"v_trace", r.vision.trace},
              {"t_trace", r.text.trace},
              {"v_logdet", r.vision.logdet},
              {"t_logdet", r.text.logdet},
              {"v_norm_mean", r.vision.mean_norm},
              {"t_norm_mean", r.text.mean_norm},
              {"roundtrip", rtj},
              {"config",
               {{"projector", projector_echo},
                {"data", o.data},
                {"split", o.split},
                {"split_seed", o.split_seed},
                {"retrieval_direction", "text_to_vision"},
                {"rank_correlation", "spearman"},
                {"covariance_denominator", "n-1"},
                {"logdet_eigenvalue_floor", kEigenvalueFloor},
                {"tie_break", "ascending_target_id"}}}};
  fs::create_directories(parent_or_cwd(o.out));
  write_json_file(o.out, report);
  if (!o.drift.empty()) {
    Matrix decoded(zv.rows(), zv.cols());
    const auto& g = rt.groups.at("caption_bank");
    for (Eigen::Index i = 0; i < zv.rows(); ++i) decoded.row(i) = stored.caption_bank.row(g.decoded[i]);
    drift_export(zv, ds.targets, decoded, o.drift);
  }
  write_resolved(parent_or_cwd(o.out), Json{{"command", "eval"},
                                            {"projector", o.projector},
                                            {"data", o.data},
                                            {"split", o.split},
                                            {"split_seed", o.split_seed},
                                            {"drift_export", !o.drift.empty()}});
  out << "n=" << r.n << " R@1=" << r.t2v.r1 << " R@5=" << r.t2v.r5 << " R@10=" << r.t2v.r10
      << " MRR=" << r.t2v.mrr << " AC=" << r.ac << '\n';
  return kExitOk;
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cembed: concept-space alignment, latent diffusion and evaluation toolkit"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic paired dataset");
  g->add_option("--seed", gen.seed);
  g->add_option("--n", gen.n, "Number of samples");
  g->add_option("--frames", gen.frames, "Frames per sample (T)");
  g->add_option("--dim-frame", gen.dim_frame, "Frame feature dim (D)");
  g->add_option("--dim-concept", gen.dim_concept, "Concept dim (d)");
  g->add_option("--noise", gen.noise, "Per-entry frame noise sigma");
  g->add_option("--drift", gen.drift, "Per-position drift amplitude");
  g->add_option("--bank-size", gen.bank_size, "Caption bank size (0: one per sample)");
  g->add_option("--out", gen.out)->required();

  GenSeqOptions gs;
  auto* q = app.add_subcommand("gen-seq", "Generate rule-based embedding sequences");
  q->add_option("--seed", gs.seed);
  q->add_option("--bank-size", gs.bank_size);
  q->add_option("--dim", gs.dim);
  q->add_option("--length", gs.length);
  q->add_option("--count", gs.count);
  q->add_option("--out", gs.out)->required();

  AlignOptions al;
  auto* a = app.add_subcommand("align", "Run the alignment curriculum");
  a->add_option("--config", al.config);
  a->add_option("--stages", al.stages)->required()->delimiter(',');
  a->add_option("--out", al.out)->required();

  TrainLcmOptions tl;
  auto* t = app.add_subcommand("train-lcm", "Train the latent diffusion next-embedding model");
  t->add_option("--config", tl.config);
  t->add_option("--data", tl.data)->required();
  t->add_option("--out", tl.out)->required();
  t->add_option("--resume", tl.resume, "Checkpoint directory to continue from");
  t->add_option("--ckpt-every", tl.ckpt_every);
  t->add_option("--max-steps", tl.max_steps);

  SampleOptions sa;
  auto* s = app.add_subcommand("sample", "Sample the next embedding after a prefix");
  s->add_option("--lcm", sa.lcm)->required();
  s->add_option("--prefix", sa.prefix)->required();
  s->add_option("--steps", sa.steps, "Reverse steps (0: full schedule)");
  s->add_option("--guidance", sa.guidance);
  s->add_option("--seed", sa.seed);
  s->add_option("--out", sa.out)->required();
  s->add_option("--bank", sa.bank, "Embedding file to nearest-decode against");
  s->add_flag("--stochastic", sa.stochastic);
  s->add_flag("--final-params", sa.final_params, "Use final instead of best-validation parameters");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a projector on a dataset");
  e->add_option("--projector", ev.projector, "Checkpoint directory or 'oracle'")->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--out", ev.out)->required();
  e->add_option("--split", ev.split);
  e->add_option("--split-seed", ev.split_seed);
  e->add_option("--drift", ev.drift, "Optional drift CSV path");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (g->parsed()) return guarded([&] { return cmd_gen(gen, out); }, err);
  if (q->parsed()) return guarded([&] { return cmd_gen_seq(gs, out); }, err);
  if (a->parsed()) return guarded([&] { return cmd_align(al, out); }, err);
  if (t->parsed()) return guarded([&] { return cmd_train_lcm(tl, out); }, err);
  if (s->parsed()) return guarded([&] { return cmd_sample(sa, out); }, err);
  if (e->parsed()) return guarded([&] { return cmd_eval(ev, out); }, err);
  return kExitUsage;
}

}  // namespace cembed

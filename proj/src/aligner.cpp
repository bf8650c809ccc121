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

#include "cembed/aligner.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cembed/optim.hpp"
#include "cembed/params.hpp"

namespace cembed {

void AlignConfig::validate() const {
  if (!(lr_projector > 0) || !(lr_encoder_adapter > 0)) {
    throw InvalidArgument("align config: learning rates must be > 0");
  }
  if (!(tau > 0)) throw InvalidArgument("align config: tau must be > 0");
  if (!(lambda_con >= 0)) throw InvalidArgument("align config: lambda_con must be >= 0");
  if (patience < 1) throw InvalidArgument("align config: patience must be >= 1");
  if (batch_size < 1) throw InvalidArgument("align config: batch_size must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("align config: max_epochs must be >= 1");
}

LossResult mse_align_loss(const Matrix& zv, const Matrix& zt) {
  if (zv.rows() != zt.rows() || zv.cols() != zt.cols()) {
    throw InvalidArgument("mse_align_loss: shape mismatch");
  }
  if (zv.rows() == 0) throw InvalidArgument("mse_align_loss: empty batch");
  const double b = static_cast<double>(zv.rows());
  const Matrix diff = zv - zt;
  LossResult r;
  r.loss = diff.squaredNorm() / b;
  r.grad_student = (2.0 / b) * diff;
  r.grad_teacher = -r.grad_student;
  return r;
}

LossResult infonce_loss(const Matrix& zv, const Matrix& zt, double tau) {
  if (zv.rows() != zt.rows() || zv.cols() != zt.cols()) {
    throw InvalidArgument("infonce_loss: shape mismatch");
  }
  if (zv.rows() < 2) throw InvalidArgument("infonce_loss: need a batch of at least 2");
  if (!(tau > 0)) throw InvalidArgument("infonce_loss: tau must be > 0");
  const Eigen::Index B = zv.rows();
  const Vector nv = zv.rowwise().norm();
  const Vector nt = zt.rowwise().norm();
  for (Eigen::Index i = 0; i < B; ++i) {
    if (nv(i) == 0.0 || nt(i) == 0.0) {
      throw InvalidArgument("infonce_loss: zero-norm row " + std::to_string(i));
    }
  }
  const Matrix uv = nv.asDiagonal().inverse() * zv;
  const Matrix ut = nt.asDiagonal().inverse() * zt;
  const Matrix cos = uv * ut.transpose();

  LossResult r;
  Matrix dlogits(B, B);
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const Vector logits = cos.row(i).transpose() / tau;
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    total += lse - logits(i);
    dlogits.row(i) = (logits.array() - lse).exp().matrix().transpose();
    dlogits(i, i) -= 1.0;
  }
  const double b = static_cast<double>(B);
  r.loss = total / b;
  const Matrix dcos = dlogits / (tau * b);

  // d cos(u, w) / du = w_hat / |u| - cos * u_hat / |u|
  r.grad_student.resize(B, zv.cols());
  r.grad_teacher.resize(B, zt.cols());
  const Matrix du = dcos * ut;               // sum_j dcos_ij * ut_j
  const Matrix dw = dcos.transpose() * uv;   // sum_i dcos_ij * uv_i
  for (Eigen::Index i = 0; i < B; ++i) {
    const double radial_v = dcos.row(i).dot(cos.row(i));
    r.grad_student.row(i) = (du.row(i) - radial_v * uv.row(i)) / nv(i);
    const double radial_t = dcos.col(i).dot(cos.col(i));
    r.grad_teacher.row(i) = (dw.row(i) - radial_t * ut.row(i)) / nt(i);
  }
  return r;
}

LossResult combined_loss(const Matrix& zv, const Matrix& zt, const AlignConfig& cfg) {
  LossResult r = mse_align_loss(zv, zt);
  if (cfg.lambda_con == 0.0) return r;
  const LossResult c = infonce_loss(zv, zt, cfg.tau);
  r.loss += cfg.lambda_con * c.loss;
  r.grad_student += cfg.lambda_con * c.grad_student;
  r.grad_teacher += cfg.lambda_con * c.grad_teacher;
  return r;
}

LearningRates lr_schedule(std::uint64_t step, std::uint64_t total_steps, const AlignConfig& cfg) {
  return lr_schedule(step, total_steps, cfg, step);
}

LearningRates lr_schedule(std::uint64_t step, std::uint64_t total_steps, const AlignConfig& cfg,
                          std::uint64_t global_step) {
  if (total_steps < cfg.warmup_steps) {
    throw InvalidArgument("lr_schedule: total_steps (" + std::to_string(total_steps) +
                          ") < warmup_steps (" + std::to_string(cfg.warmup_steps) + ")");
  }
  if (step > total_steps) throw InvalidArgument("lr_schedule: step beyond total_steps");
  const double factor = warmup_cosine(step, cfg.warmup_steps, total_steps, 1.0, 0.0);
  LearningRates lr;
  lr.projector = cfg.lr_projector * factor;
  lr.encoder_adapter = global_step < cfg.freeze_steps ? 0.0 : cfg.lr_encoder_adapter * factor;
  return lr;
}

ValidationMetrics validate(const ProjectorParams& params, const ProjectorConfig& pcfg, const Dataset& val) {
  if (val.size() == 0) throw InvalidArgument("validate: empty validation set");
  const Matrix zv = project_all(params, pcfg, val.frames, val.frames_per_sample);
  ValidationMetrics m;
  m.mse = (zv - val.targets).squaredNorm() / static_cast<double>(val.size());
  double cos_sum = 0.0;
  for (Eigen::Index i = 0; i < val.size(); ++i) {
    const double nz = zv.row(i).norm();
    const double nt = val.targets.row(i).norm();
    cos_sum += (nz > 0 && nt > 0) ? zv.row(i).dot(val.targets.row(i)) / (nz * nt) : 0.0;
  }
  m.cos = cos_sum / static_cast<double>(val.size());
  return m;
}

StageResult train_stage(const Dataset& train, const Dataset& val, ProjectorParams params,
                        const ProjectorConfig& pcfg, const AlignConfig& cfg,
                        std::uint64_t global_step_offset) {
  cfg.validate();
  if (train.size() == 0) throw InvalidArgument("train_stage: empty training set");
  if (val.size() == 0) throw InvalidArgument("train_stage: empty validation set");

  const auto n = static_cast<std::uint64_t>(train.size());
  const std::uint64_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total_steps = batches * cfg.max_epochs;

  AdamW<ProjectorParams> opt(params, AdamWConfig{cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  SeededRng rng(cfg.seed);

  StageResult result;
  TrainHistory& hist = result.history;
  const auto initial = validate(params, pcfg, val);
  hist.epochs.push_back({0, initial.mse, initial.cos});

  // Patience counts from the first trained epoch; the incoming params remain a candidate for the
  // returned best-validation model.
  double best = std::numeric_limits<double>::infinity();
  double best_returned = initial.mse;
  std::uint64_t bad_epochs = 0;
  result.params = params;
  std::uint64_t step = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (std::uint64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_index(i))]);
    }
    for (std::uint64_t b = 0; b < batches; ++b) {
      ++step;
      const std::uint64_t begin = b * cfg.batch_size;
      const std::uint64_t end = std::min(n, begin + cfg.batch_size);
      const auto bsz = static_cast<Eigen::Index>(end - begin);

      Matrix zv(bsz, pcfg.concept_dim), zt(bsz, pcfg.concept_dim);
      std::vector<ForwardTrace> traces;
      traces.reserve(static_cast<std::size_t>(bsz));
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(begin) + static_cast<std::size_t>(k)];
        auto proj = project(params, pcfg, train.sample_frames(i), true, &rng);
        zv.row(k) = proj.embedding.transpose();
        zt.row(k) = train.targets.row(i);
        traces.push_back(std::move(proj.trace));
      }
      const LossResult loss = combined_loss(zv, zt, cfg);
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError("alignment loss is not finite", global_step_offset + step);
      }
      ProjectorParams grads = zeros_like(params);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const auto g = project_backward(params, pcfg, traces[static_cast<std::size_t>(k)],
                                        loss.grad_student.row(k).transpose());
        accumulate(grads, g.params);
      }
      const std::uint64_t global = global_step_offset + step;
      const LearningRates lr = lr_schedule(step, total_steps, cfg, global);
      opt.step(params, grads, [&](const std::string& name) {
        return name == "adapter" ? lr.encoder_adapter : lr.projector;
      });
      hist.steps.push_back({global, global < cfg.freeze_steps ? 1 : 2, lr.projector,
                            lr.encoder_adapter, loss.loss});
    }

    const auto m = validate(params, pcfg, val);
    if (!std::isfinite(m.mse)) throw DivergenceError("validation loss is not finite", global_step_offset + step);
    hist.epochs.push_back({epoch, m.mse, m.cos});
    if (m.mse < best_returned) {
      best_returned = m.mse;
      result.params = params;
      hist.best_epoch = epoch;
    }
    if (m.mse < best) {
      best = m.mse;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      hist.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  result.steps_taken = step;
  return result;
}

CurriculumResult run_curriculum(const std::vector<StageData>& stages, ProjectorParams params,
                                const ProjectorConfig& pcfg, const AlignConfig& cfg) {
  if (stages.empty()) throw InvalidArgument("run_curriculum: no stages");
  CurriculumResult out;
  std::uint64_t global = 0;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    AlignConfig c = cfg;
    c.max_epochs = st.stage.epochs;
    c.batch_size = st.stage.batch_size;
    if (st.stage.lr_projector) c.lr_projector = *st.stage.lr_projector;
    if (st.stage.lr_encoder_adapter) c.lr_encoder_adapter = *st.stage.lr_encoder_adapter;
    if (st.stage.warmup_steps) c.warmup_steps = *st.stage.warmup_steps;
    c.seed = cfg.seed + s;
    auto r = train_stage(st.train, st.val, std::move(params), pcfg, c, global);
    global += r.steps_taken;
    params = std::move(r.params);
    out.histories.push_back(std::move(r.history));
  }
  out.params = std::move(params);
  return out;
}

void write_history_csv(const std::filesystem::path& prefix, const TrainHistory& h) {
  const auto steps_path = prefix.string() + "_steps.csv";
  const auto epochs_path = prefix.string() + "_epochs.csv";
  std::ofstream s(steps_path, std::ios::trunc);
  if (!s) throw IoError("cannot open " + steps_path + " for writing");
  s.precision(17);
  s << "step,phase,lr_proj,lr_enc,loss\n";
  for (const auto& r : h.steps) {
    s << r.step << ',' << r.phase << ',' << r.lr_proj << ',' << r.lr_enc << ',' << r.loss << '\n';
  }
  std::ofstream e(epochs_path, std::ios::trunc);
  if (!e) throw IoError("cannot open " + epochs_path + " for writing");
  e.precision(17);
  e << "epoch,val_mse,val_cos\n";
  for (const auto& r : h.epochs) e << r.epoch << ',' << r.val_mse << ',' << r.val_cos << '\n';
  if (!s || !e) throw IoError("write failed for history " + prefix.string());
}

}  // namespace cembed

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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cembed/attention.hpp"
#include "cembed/corpus.hpp"
#include "cembed/numerics.hpp"
#include "cembed/optim.hpp"
#include "cembed/rng.hpp"

namespace cembed {

/// Variance-preserving schedule tabulated at indices 0..steps-1. Index 0 is
/// the clean end (largest log-SNR).
struct NoiseSchedule {
  Vector alpha;
  Vector sigma;
  Vector log_snr;  // log(alpha^2 / sigma^2), strictly decreasing

  Eigen::Index steps() const { return alpha.size(); }
};

/// log-SNR linearly spaced from lambda_max down to lambda_min, with
/// alpha = sqrt(sigmoid(lambda)) and sigma = sqrt(sigmoid(-lambda)).
NoiseSchedule build_schedule(Eigen::Index steps, double lambda_max = 10.0, double lambda_min = -10.0);

/// x_t = alpha_t x0 + sigma_t eps. Works row-wise on matrices too.
template <typename DerivedX, typename DerivedE>
Eigen::Matrix<double, DerivedX::RowsAtCompileTime, DerivedX::ColsAtCompileTime> forward_diffuse(
    const Eigen::MatrixBase<DerivedX>& x0, Eigen::Index t, const Eigen::MatrixBase<DerivedE>& eps,
    const NoiseSchedule& schedule) {
  if (t < 0 || t >= schedule.steps()) throw InvalidArgument("forward_diffuse: t out of range");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
    throw InvalidArgument("forward_diffuse: shape mismatch");
  }
  return schedule.alpha(t) * x0 + schedule.sigma(t) * eps;
}

/// Sizes of the two-tower model: a causal transformer contextualizer over the
/// preceding embeddings and a residual-MLP denoiser predicting the clean
/// embedding.
struct LcmModelConfig {
  Eigen::Index dim = 1024;        // concept space
  Eigen::Index ctx_layers = 2;
  Eigen::Index ctx_width = 256;
  Eigen::Index ctx_heads = 4;
  Eigen::Index ctx_ffn = 512;
  Eigen::Index den_depth = 3;
  Eigen::Index den_width = 512;
  Eigen::Index time_dim = 16;     // sinusoidal log-SNR embedding, even
  double init_sigma = 0.02;
  bool zero_output_head = true;
  bool use_modality_tags = false;
  Eigen::Index modality_count = 2;

  void validate() const;
};

struct ContextLayer {
  AttentionWeights attn;
  Matrix ffn_w1, ffn_b1;  // ffn x width, ffn x 1
  Matrix ffn_w2, ffn_b2;  // width x ffn, width x 1
};

struct DenoiserBlock {
  Matrix w1, b1;  // width x width, width x 1
  Matrix w2, b2;
};

struct TwoTowerParams {
  Matrix ctx_in_w, ctx_in_b;    // width x dim, width x 1
  Matrix tag_embed;             // modality_count x width, or empty
  std::vector<ContextLayer> ctx_layers;
  Matrix ctx_out_w, ctx_out_b;  // width x width, width x 1
  Matrix null_context;          // width x 1, replaces c on the unconditional branch
  Matrix den_in_w, den_in_b;    // den_width x (dim + time_dim + ctx_width)
  std::vector<DenoiserBlock> den_blocks;
  Matrix den_out_w, den_out_b;  // dim x den_width, dim x 1
  std::uint64_t generation = 0;

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("ctx.in.w", s.ctx_in_w);
    f("ctx.in.b", s.ctx_in_b);
    f("ctx.tag_embed", s.tag_embed);
    for (std::size_t l = 0; l < s.ctx_layers.size(); ++l) {
      const std::string p = "ctx.layer" + std::to_string(l) + ".";
      s.ctx_layers[l].attn.visit(f, p + "attn.");
      f(p + "ffn.w1", s.ctx_layers[l].ffn_w1);
      f(p + "ffn.b1", s.ctx_layers[l].ffn_b1);
      f(p + "ffn.w2", s.ctx_layers[l].ffn_w2);
      f(p + "ffn.b2", s.ctx_layers[l].ffn_b2);
    }
    f("ctx.out.w", s.ctx_out_w);
    f("ctx.out.b", s.ctx_out_b);
    f("null_context", s.null_context);
    f("den.in.w", s.den_in_w);
    f("den.in.b", s.den_in_b);
    for (std::size_t b = 0; b < s.den_blocks.size(); ++b) {
      const std::string p = "den.block" + std::to_string(b) + ".";
      f(p + "w1", s.den_blocks[b].w1);
      f(p + "b1", s.den_blocks[b].b1);
      f(p + "w2", s.den_blocks[b].w2);
      f(p + "b2", s.den_blocks[b].b2);
    }
    f("den.out.w", s.den_out_w);
    f("den.out.b", s.den_out_b);
  }
};

TwoTowerParams init_two_tower(const LcmModelConfig& cfg, SeededRng& rng);

/// A prefix of concept embeddings (rows) with optional modality tags.
struct Prefix {
  Matrix embeddings;                 // L x dim, L >= 1
  std::vector<std::uint8_t> tags;    // empty or one per row
};

struct ContextCache {
  Matrix input;
  std::vector<std::uint8_t> tags;
  std::vector<Matrix> layer_in;
  std::vector<AttentionCache> attn;
  std::vector<Matrix> after_attn;
  std::vector<Matrix> ffn_pre;
  Matrix last_hidden;
};

/// Causal contextualizer: row i of the result depends only on rows <= i.
Matrix contextualize(const TwoTowerParams& params, const LcmModelConfig& cfg, const Prefix& prefix,
                     ContextCache* cache = nullptr);

/// Gradients of the contextualizer parameters for upstream dL/dC (L x width),
/// accumulated into `grads`.
void contextualize_backward(const TwoTowerParams& params, const LcmModelConfig& cfg,
                            const ContextCache& cache, const Matrix& dcontext, TwoTowerParams& grads);

/// Sinusoidal embedding of a log-SNR value.
Vector log_snr_embedding(double log_snr, Eigen::Index dim);

struct DenoiserCache {
  Matrix input;              // B x (dim + time + width)
  std::vector<Matrix> z;     // block inputs, B x den_width
  std::vector<Matrix> pre;   // block pre-activations
  Matrix last;
  std::vector<bool> conditioned;
};

/// Predicts the clean embedding for each row of xt. Rows whose `conditioned`
/// flag is false see the learned null context instead of their row of c.
Matrix denoise(const TwoTowerParams& params, const LcmModelConfig& cfg, const Matrix& xt,
               const std::vector<Eigen::Index>& t, const Matrix& context,
               const std::vector<bool>& conditioned, const NoiseSchedule& schedule,
               DenoiserCache* cache = nullptr);

/// Single-row convenience overload.
Vector denoise(const TwoTowerParams& params, const LcmModelConfig& cfg, const Vector& xt,
               Eigen::Index t, const Vector& context, bool conditioned, const NoiseSchedule& schedule);

/// Accumulates denoiser gradients into `grads`; returns dL/dcontext (B x width,
/// zero rows where unconditioned).
Matrix denoise_backward(const TwoTowerParams& params, const LcmModelConfig& cfg,
                        const DenoiserCache& cache, const Matrix& dout, TwoTowerParams& grads);

/// Training objective knobs shared by the loss and the trainer.
struct LcmTrainConfig {
  double guidance_p = 0.15;
  double lr = 3e-5;
  std::uint64_t warmup = 300;
  double final_lr = 1e-6;
  double weight_decay = 0.01;
  double adam_eps = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_clip = 25.0;
  std::uint64_t max_steps = 10000;
  std::uint64_t batch_size = 32;
  std::uint64_t ckpt_every = 1000;
  std::uint64_t seed = 42;
  bool squared_loss = false;         // false: ||x0 - x0_hat||_2 as in the reconstruction objective
  bool final_position_only = false;  // train only on predicting each sequence's last element

  void validate() const;
};

struct DiffusionItem {
  Prefix prefix;
  Vector target;
};

/// Per-item randomness of one loss evaluation.
struct NoiseDraw {
  Eigen::Index t = 0;
  bool dropped = false;
  Vector eps;
};

/// Draws, per item and in this order: t uniform over the schedule, the
/// condition-dropout coin, then eps ~ N(0, I).
std::vector<NoiseDraw> draw_noise(std::size_t items, Eigen::Index dim, const NoiseSchedule& schedule,
                                  double guidance_p, SeededRng& rng);

struct DiffusionLoss {
  double loss = 0.0;  // summed over items
  TwoTowerParams grads;
  std::size_t dropped = 0;
};

/// Reconstruction loss for fixed draws, with gradients for every parameter.
DiffusionLoss diffusion_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                             const std::vector<DiffusionItem>& batch, const std::vector<NoiseDraw>& draws,
                             const NoiseSchedule& schedule, bool squared_loss);

/// Draws the noise from `rng` and evaluates the loss.
DiffusionLoss diffusion_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                             const std::vector<DiffusionItem>& batch, const NoiseSchedule& schedule,
                             const LcmTrainConfig& tcfg, SeededRng& rng);

/// Learning rate for update `step` (1-based): linear warmup to lr, cosine to final_lr.
double lcm_lr(std::uint64_t step, const LcmTrainConfig& cfg);

struct LcmStepRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
  std::uint64_t dropped = 0;

  friend bool operator==(const LcmStepRecord&, const LcmStepRecord&) = default;
};

struct LcmEvalRecord {
  std::uint64_t step = 0;
  double val_loss = 0.0;

  friend bool operator==(const LcmEvalRecord&, const LcmEvalRecord&) = default;
};

struct LcmHistory {
  std::vector<LcmStepRecord> steps;
  std::vector<LcmEvalRecord> evals;
};

/// Full trainer state; enough to resume bit-identically.
struct LcmTrainerState {
  TwoTowerParams params;
  TwoTowerParams adam_m, adam_v;
  std::vector<std::uint64_t> adam_steps;
  std::string rng_state;
  std::uint64_t step = 0;
  TwoTowerParams best_params;
  double best_val = 0.0;
  std::uint64_t best_step = 0;
  LcmHistory history;
};

/// Expands a corpus into (prefix, next embedding) items.
std::vector<DiffusionItem> make_items(const SequenceCorpus& corpus, bool final_position_only,
                                      bool with_tags = false);

/// Mean per-item loss over `items` with noise from a fixed seed.
double lcm_validation_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                           const std::vector<DiffusionItem>& items, const NoiseSchedule& schedule,
                           const LcmTrainConfig& tcfg);

using LcmCheckpointFn = std::function<void(const LcmTrainerState&)>;

/// Runs (or resumes) training until cfg.max_steps. `on_checkpoint` fires every
/// cfg.ckpt_every steps, after the validation pass of that step.
LcmTrainerState train_lcm(const std::vector<DiffusionItem>& train, const std::vector<DiffusionItem>& val,
                          const LcmModelConfig& mcfg, const LcmTrainConfig& tcfg,
                          const NoiseSchedule& schedule, std::optional<LcmTrainerState> resume = {},
                          const LcmCheckpointFn& on_checkpoint = {});

struct SamplerOptions {
  double guidance_scale = 0.0;
  Eigen::Index sample_steps = 0;  // 0: every schedule index from steps-1 down to 1
  bool stochastic = false;        // re-noise with fresh Gaussian draws instead of the recovered eps
};

/// Reverse-time sampling of the next embedding after `prefix`.
Vector sample_next(const TwoTowerParams& params, const LcmModelConfig& cfg, const Prefix& prefix,
                   const NoiseSchedule& schedule, const SamplerOptions& opt, SeededRng& rng);

/// Timesteps visited by the sampler, from noisiest to cleanest.
std::vector<Eigen::Index> sampler_timesteps(const NoiseSchedule& schedule, Eigen::Index sample_steps);

}  // namespace cembed

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

#include "cembed/latentdiff.hpp"

#include <cmath>
#include <limits>

#include "cembed/params.hpp"

namespace cembed {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix lecun(SeededRng& rng, Eigen::Index rows, Eigen::Index cols) {
  return gaussian_sample(rng, rows, cols, 0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
}

Matrix silu_m(const Matrix& x) { return x.unaryExpr([](double v) { return silu(v); }); }
Matrix silu_grad_m(const Matrix& x) { return x.unaryExpr([](double v) { return silu_grad(v); }); }

}  // namespace

NoiseSchedule build_schedule(Eigen::Index steps, double lambda_max, double lambda_min) {
  if (steps < 2) throw InvalidArgument("build_schedule: need at least 2 steps");
  if (!(lambda_max > lambda_min)) {
    throw InvalidArgument("build_schedule: lambda_max must exceed lambda_min (log-SNR must decrease)");
  }
  NoiseSchedule s;
  s.alpha.resize(steps);
  s.sigma.resize(steps);
  s.log_snr.resize(steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const double lam = lambda_max + (lambda_min - lambda_max) * static_cast<double>(t) /
                                        static_cast<double>(steps - 1);
    s.log_snr(t) = lam;
    // Separate sigmoids keep sigma accurate in relative terms near the clean end.
    s.alpha(t) = std::sqrt(sigmoid(lam));
    s.sigma(t) = std::sqrt(sigmoid(-lam));
  }
  return s;
}

void LcmModelConfig::validate() const {
  if (dim < 1 || ctx_layers < 0 || ctx_width < 2 || ctx_ffn < 1 || den_depth < 0 || den_width < 1) {
    throw InvalidArgument("lcm model: sizes must be positive");
  }
  if (ctx_heads < 1 || ctx_width % ctx_heads != 0) {
    throw InvalidArgument("lcm model: ctx_width must be divisible by ctx_heads");
  }
  if (ctx_width % 2 != 0 || time_dim % 2 != 0) {
    throw InvalidArgument("lcm model: ctx_width and time_dim must be even");
  }
}

void LcmTrainConfig::validate() const {
  if (!(guidance_p >= 0.0 && guidance_p <= 1.0)) {
    throw InvalidArgument("lcm train: guidance_p must be in [0, 1]");
  }
  if (!(lr > 0) || !(final_lr >= 0) || final_lr > lr) throw InvalidArgument("lcm train: bad learning rates");
  if (batch_size < 1 || max_steps < 1 || ckpt_every < 1) {
    throw InvalidArgument("lcm train: batch_size, max_steps and ckpt_every must be >= 1");
  }
  if (warmup > max_steps) throw InvalidArgument("lcm train: warmup exceeds max_steps");
  if (!(grad_clip > 0)) throw InvalidArgument("lcm train: grad_clip must be > 0");
}

TwoTowerParams init_two_tower(const LcmModelConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const auto d = cfg.dim, h = cfg.ctx_width, w = cfg.den_width;
  TwoTowerParams p;
  p.ctx_in_w = lecun(rng, h, d);
  p.ctx_in_b = Matrix::Zero(h, 1);
  p.tag_embed = cfg.use_modality_tags ? gaussian_sample(rng, cfg.modality_count, h, 0.0, cfg.init_sigma)
                                      : Matrix(0, 0);
  for (Eigen::Index l = 0; l < cfg.ctx_layers; ++l) {
    ContextLayer layer;
    layer.attn = init_attention(h, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    layer.ffn_w1 = lecun(rng, cfg.ctx_ffn, h);
    layer.ffn_b1 = Matrix::Zero(cfg.ctx_ffn, 1);
    layer.ffn_w2 = lecun(rng, h, cfg.ctx_ffn);
    layer.ffn_b2 = Matrix::Zero(h, 1);
    p.ctx_layers.push_back(std::move(layer));
  }
  p.ctx_out_w = lecun(rng, h, h);
  p.ctx_out_b = Matrix::Zero(h, 1);
  p.null_context = gaussian_sample(rng, h, 1, 0.0, cfg.init_sigma);
  p.den_in_w = lecun(rng, w, d + cfg.time_dim + h);
  p.den_in_b = Matrix::Zero(w, 1);
  for (Eigen::Index b = 0; b < cfg.den_depth; ++b) {
    DenoiserBlock blk;
    blk.w1 = lecun(rng, w, w);
    blk.b1 = Matrix::Zero(w, 1);
    blk.w2 = lecun(rng, w, w);
    blk.b2 = Matrix::Zero(w, 1);
    p.den_blocks.push_back(std::move(blk));
  }
  p.den_out_w = cfg.zero_output_head ? Matrix(Matrix::Zero(d, w)) : lecun(rng, d, w);
  p.den_out_b = Matrix::Zero(d, 1);
  return p;
}

Matrix contextualize(const TwoTowerParams& params, const LcmModelConfig& cfg, const Prefix& prefix,
                     ContextCache* cache) {
  const Matrix& x = prefix.embeddings;
  if (x.rows() < 1) throw InvalidArgument("contextualize: empty prefix");
  if (x.cols() != cfg.dim) throw InvalidArgument("contextualize: embedding width mismatch");
  const bool tags = cfg.use_modality_tags && !prefix.tags.empty();
  if (tags && static_cast<Eigen::Index>(prefix.tags.size()) != x.rows()) {
    throw InvalidArgument("contextualize: one modality tag per position required");
  }

  Matrix h = (x * params.ctx_in_w.transpose()).rowwise() + params.ctx_in_b.col(0).transpose();
  h += sinusoidal_pe(x.rows(), cfg.ctx_width);
  if (tags) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto tag = static_cast<Eigen::Index>(prefix.tags[static_cast<std::size_t>(i)]);
      if (tag >= cfg.modality_count) throw InvalidArgument("contextualize: modality tag out of range");
      h.row(i) += params.tag_embed.row(tag);
    }
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->tags = tags ? prefix.tags : std::vector<std::uint8_t>{};
    cache->layer_in.clear();
    cache->attn.clear();
    cache->after_attn.clear();
    cache->ffn_pre.clear();
  }
  AttentionOptions opt;
  opt.heads = cfg.ctx_heads;
  opt.causal = true;
  for (const auto& layer : params.ctx_layers) {
    AttentionCache ac;
    Matrix a = h + attention_forward(layer.attn, h, h, opt, nullptr, cache ? &ac : nullptr);
    Matrix pre = (a * layer.ffn_w1.transpose()).rowwise() + layer.ffn_b1.col(0).transpose();
    Matrix next = a + ((silu_m(pre) * layer.ffn_w2.transpose()).rowwise() + layer.ffn_b2.col(0).transpose());
    if (cache != nullptr) {
      cache->layer_in.push_back(std::move(h));
      cache->attn.push_back(std::move(ac));
      cache->after_attn.push_back(std::move(a));
      cache->ffn_pre.push_back(std::move(pre));
    }
    h = std::move(next);
  }
  Matrix c = (h * params.ctx_out_w.transpose()).rowwise() + params.ctx_out_b.col(0).transpose();
  if (cache != nullptr) cache->last_hidden = std::move(h);
  return c;
}

void contextualize_backward(const TwoTowerParams& params, const LcmModelConfig& cfg,
                            const ContextCache& cache, const Matrix& dcontext, TwoTowerParams& g) {
  g.ctx_out_w += dcontext.transpose() * cache.last_hidden;
  g.ctx_out_b += dcontext.colwise().sum().transpose();
  Matrix dh = dcontext * params.ctx_out_w;
  for (std::size_t l = params.ctx_layers.size(); l-- > 0;) {
    const auto& layer = params.ctx_layers[l];
    auto& gl = g.ctx_layers[l];
    const Matrix& a = cache.after_attn[l];
    const Matrix& pre = cache.ffn_pre[l];
    gl.ffn_w2 += dh.transpose() * silu_m(pre);
    gl.ffn_b2 += dh.colwise().sum().transpose();
    const Matrix dpre = (dh * layer.ffn_w2).cwiseProduct(silu_grad_m(pre));
    gl.ffn_w1 += dpre.transpose() * a;
    gl.ffn_b1 += dpre.colwise().sum().transpose();
    const Matrix da = dh + dpre * layer.ffn_w1;
    const auto ag = attention_backward(layer.attn, cache.attn[l], da);
    gl.attn.wq += ag.dw.wq;
    gl.attn.wk += ag.dw.wk;
    gl.attn.wv += ag.dw.wv;
    gl.attn.wo += ag.dw.wo;
    dh = da + ag.dxq + ag.dxkv;
  }
  g.ctx_in_w += dh.transpose() * cache.input;
  g.ctx_in_b += dh.colwise().sum().transpose();
  if (!cache.tags.empty()) {
    for (Eigen::Index i = 0; i < dh.rows(); ++i) {
      g.tag_embed.row(cache.tags[static_cast<std::size_t>(i)]) += dh.row(i);
    }
  }
  (void)cfg;
}

Vector log_snr_embedding(double log_snr, Eigen::Index dim) {
  Vector e(dim);
  const Eigen::Index half = dim / 2;
  for (Eigen::Index k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(1000.0) * static_cast<double>(k) / static_cast<double>(half));
    e(k) = std::sin(log_snr * freq);
    e(half + k) = std::cos(log_snr * freq);
  }
  return e;
}

Matrix denoise(const TwoTowerParams& params, const LcmModelConfig& cfg, const Matrix& xt,
               const std::vector<Eigen::Index>& t, const Matrix& context,
               const std::vector<bool>& conditioned, const NoiseSchedule& schedule, DenoiserCache* cache) {
  const Eigen::Index B = xt.rows();
  if (xt.cols() != cfg.dim) throw InvalidArgument("denoise: embedding width mismatch");
  if (static_cast<Eigen::Index>(t.size()) != B || static_cast<Eigen::Index>(conditioned.size()) != B ||
      context.rows() != B || context.cols() != cfg.ctx_width) {
    throw InvalidArgument("denoise: batch shape mismatch");
  }
  const Eigen::Index d = cfg.dim, e = cfg.time_dim, h = cfg.ctx_width;
  Matrix in(B, d + e + h);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index ti = t[static_cast<std::size_t>(i)];
    if (ti < 0 || ti >= schedule.steps()) throw InvalidArgument("denoise: timestep out of range");
    in.row(i).head(d) = xt.row(i);
    in.row(i).segment(d, e) = log_snr_embedding(schedule.log_snr(ti), e).transpose();
    if (conditioned[static_cast<std::size_t>(i)]) {
      in.row(i).tail(h) = context.row(i);
    } else {
      in.row(i).tail(h) = params.null_context.col(0).transpose();
    }
  }
  Matrix z = (in * params.den_in_w.transpose()).rowwise() + params.den_in_b.col(0).transpose();
  if (cache != nullptr) {
    cache->z.clear();
    cache->pre.clear();
  }
  for (const auto& blk : params.den_blocks) {
    Matrix pre = (z * blk.w1.transpose()).rowwise() + blk.b1.col(0).transpose();
    Matrix next = z + ((silu_m(pre) * blk.w2.transpose()).rowwise() + blk.b2.col(0).transpose());
    if (cache != nullptr) {
      cache->z.push_back(std::move(z));
      cache->pre.push_back(std::move(pre));
    }
    z = std::move(next);
  }
  Matrix out = (z * params.den_out_w.transpose()).rowwise() + params.den_out_b.col(0).transpose();
  if (cache != nullptr) {
    cache->input = std::move(in);
    cache->last = std::move(z);
    cache->conditioned = conditioned;
  }
  return out;
}

Vector denoise(const TwoTowerParams& params, const LcmModelConfig& cfg, const Vector& xt, Eigen::Index t,
               const Vector& context, bool conditioned, const NoiseSchedule& schedule) {
  const Matrix x = xt.transpose();
  const Matrix c = context.transpose();
  const std::vector<Eigen::Index> ts{t};
  const std::vector<bool> cond{conditioned};
  return denoise(params, cfg, x, ts, c, cond, schedule).row(0).transpose();
}

Matrix denoise_backward(const TwoTowerParams& params, const LcmModelConfig& cfg, const DenoiserCache& cache,
                        const Matrix& dout, TwoTowerParams& g) {
  g.den_out_w += dout.transpose() * cache.last;
  g.den_out_b += dout.colwise().sum().transpose();
  Matrix dz = dout * params.den_out_w;
  for (std::size_t b = params.den_blocks.size(); b-- > 0;) {
    const auto& blk = params.den_blocks[b];
    auto& gb = g.den_blocks[b];
    const Matrix& pre = cache.pre[b];
    gb.w2 += dz.transpose() * silu_m(pre);
    gb.b2 += dz.colwise().sum().transpose();
    const Matrix dpre = (dz * blk.w2).cwiseProduct(silu_grad_m(pre));
    gb.w1 += dpre.transpose() * cache.z[b];
    gb.b1 += dpre.colwise().sum().transpose();
    dz += dpre * blk.w1;
  }
  g.den_in_w += dz.transpose() * cache.input;
  g.den_in_b += dz.colwise().sum().transpose();
  const Matrix din = dz * params.den_in_w;
  const Eigen::Index h = cfg.ctx_width;
  Matrix dcontext = Matrix::Zero(dout.rows(), h);
  for (Eigen::Index i = 0; i < dout.rows(); ++i) {
    if (cache.conditioned[static_cast<std::size_t>(i)]) {
      dcontext.row(i) = din.row(i).tail(h);
    } else {
      g.null_context.col(0) += din.row(i).tail(h).transpose();
    }
  }
  return dcontext;
}

std::vector<NoiseDraw> draw_noise(std::size_t items, Eigen::Index dim, const NoiseSchedule& schedule,
                                  double guidance_p, SeededRng& rng) {
  std::vector<NoiseDraw> draws(items);
  for (auto& d : draws) {
    d.t = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(schedule.steps())));
    d.dropped = rng.bernoulli(guidance_p);
    d.eps.resize(dim);
    for (Eigen::Index j = 0; j < dim; ++j) d.eps(j) = rng.normal();
  }
  return draws;
}

DiffusionLoss diffusion_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                             const std::vector<DiffusionItem>& batch, const std::vector<NoiseDraw>& draws,
                             const NoiseSchedule& schedule, bool squared_loss) {
  if (batch.empty()) throw InvalidArgument("diffusion_loss: empty batch");
  if (draws.size() != batch.size()) throw InvalidArgument("diffusion_loss: one draw per item required");
  const auto B = static_cast<Eigen::Index>(batch.size());
  DiffusionLoss out;
  out.grads = zeros_like(params);

  Matrix x0(B, cfg.dim), xt(B, cfg.dim), ctx = Matrix::Zero(B, cfg.ctx_width);
  std::vector<Eigen::Index> ts(batch.size());
  std::vector<bool> cond(batch.size());
  std::vector<ContextCache> caches(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& item = batch[i];
    const auto& draw = draws[i];
    if (item.target.size() != cfg.dim) throw InvalidArgument("diffusion_loss: target width mismatch");
    x0.row(r) = item.target.transpose();
    xt.row(r) = forward_diffuse(item.target, draw.t, draw.eps, schedule).transpose();
    ts[i] = draw.t;
    cond[i] = !draw.dropped;
    if (draw.dropped) {
      ++out.dropped;
    } else {
      const Matrix c = contextualize(params, cfg, item.prefix, &caches[i]);
      ctx.row(r) = c.row(c.rows() - 1);
    }
  }

  DenoiserCache dc;
  const Matrix pred = denoise(params, cfg, xt, ts, ctx, cond, schedule, &dc);
  const Matrix resid = x0 - pred;
  Matrix dpred(B, cfg.dim);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double sq = resid.row(i).squaredNorm();
    if (squared_loss) {
      out.loss += sq;
      dpred.row(i) = -2.0 * resid.row(i);
    } else {
      const double norm = std::sqrt(sq);
      out.loss += norm;
      dpred.row(i) = norm > 0.0 ? RowVector(-resid.row(i) / norm) : RowVector::Zero(cfg.dim);
    }
  }
  const Matrix dctx = denoise_backward(params, cfg, dc, dpred, out.grads);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!cond[i]) continue;
    const Eigen::Index L = batch[i].prefix.embeddings.rows();
    Matrix dC = Matrix::Zero(L, cfg.ctx_width);
    dC.row(L - 1) = dctx.row(static_cast<Eigen::Index>(i));
    contextualize_backward(params, cfg, caches[i], dC, out.grads);
  }
  return out;
}

DiffusionLoss diffusion_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                             const std::vector<DiffusionItem>& batch, const NoiseSchedule& schedule,
                             const LcmTrainConfig& tcfg, SeededRng& rng) {
  const auto draws = draw_noise(batch.size(), cfg.dim, schedule, tcfg.guidance_p, rng);
  return diffusion_loss(params, cfg, batch, draws, schedule, tcfg.squared_loss);
}

double lcm_lr(std::uint64_t step, const LcmTrainConfig& cfg) {
  return warmup_cosine(step, cfg.warmup, cfg.max_steps, cfg.lr, cfg.final_lr);
}

std::vector<DiffusionItem> make_items(const SequenceCorpus& corpus, bool final_position_only, bool with_tags) {
  std::vector<DiffusionItem> items;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const Matrix& seq = corpus.sequences[s];
    const Eigen::Index first = final_position_only ? seq.rows() - 1 : 1;
    for (Eigen::Index p = std::max<Eigen::Index>(first, 1); p < seq.rows(); ++p) {
      DiffusionItem it;
      it.prefix.embeddings = seq.topRows(p);
      if (with_tags && s < corpus.tags.size()) {
        it.prefix.tags.assign(corpus.tags[s].begin(), corpus.tags[s].begin() + p);
      }
      it.target = seq.row(p).transpose();
      items.push_back(std::move(it));
    }
  }
  return items;
}

double lcm_validation_loss(const TwoTowerParams& params, const LcmModelConfig& cfg,
                           const std::vector<DiffusionItem>& items, const NoiseSchedule& schedule,
                           const LcmTrainConfig& tcfg) {
  if (items.empty()) throw InvalidArgument("lcm_validation_loss: no items");
  SeededRng rng(tcfg.seed ^ 0x76616c6964ULL);
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < items.size(); begin += kChunk) {
    const std::size_t end = std::min(items.size(), begin + kChunk);
    const std::vector<DiffusionItem> chunk(items.begin() + static_cast<std::ptrdiff_t>(begin),
                                           items.begin() + static_cast<std::ptrdiff_t>(end));
    const auto draws = draw_noise(chunk.size(), cfg.dim, schedule, 0.0, rng);
    total += diffusion_loss(params, cfg, chunk, draws, schedule, tcfg.squared_loss).loss;
  }
  return total / static_cast<double>(items.size());
}

LcmTrainerState train_lcm(const std::vector<DiffusionItem>& train, const std::vector<DiffusionItem>& val,
                          const LcmModelConfig& mcfg, const LcmTrainConfig& tcfg,
                          const NoiseSchedule& schedule, std::optional<LcmTrainerState> resume,
                          const LcmCheckpointFn& on_checkpoint) {
  mcfg.validate();
  tcfg.validate();
  if (train.empty()) throw InvalidArgument("train_lcm: empty training corpus");

  LcmTrainerState st;
  SeededRng rng(tcfg.seed);
  const AdamWConfig acfg{tcfg.beta1, tcfg.beta2, tcfg.adam_eps, tcfg.weight_decay};
  std::optional<AdamW<TwoTowerParams>> opt;
  if (resume) {
    st = std::move(*resume);
    rng = SeededRng::deserialize(st.rng_state);
    opt.emplace(st.params, acfg);
    opt->restore(st.adam_m, st.adam_v, st.adam_steps);
  } else {
    SeededRng init_rng(tcfg.seed ^ 0x696e6974ULL);
    st.params = init_two_tower(mcfg, init_rng);
    st.best_params = st.params;
    st.best_val = std::numeric_limits<double>::infinity();
    opt.emplace(st.params, acfg);
  }

  std::vector<DiffusionItem> batch(static_cast<std::size_t>(tcfg.batch_size));
  while (st.step < tcfg.max_steps) {
    const std::uint64_t step = ++st.step;
    for (auto& item : batch) item = train[static_cast<std::size_t>(rng.uniform_index(train.size()))];
    DiffusionLoss l = diffusion_loss(st.params, mcfg, batch, schedule, tcfg, rng);
    if (!std::isfinite(l.loss)) throw DivergenceError("diffusion loss is not finite", step);
    const double norm = clip_grad_norm(l.grads, tcfg.grad_clip);
    if (!std::isfinite(norm)) throw DivergenceError("gradient norm is not finite", step);
    const double clipped = std::sqrt(squared_norm(l.grads));
    const double lr = lcm_lr(step, tcfg);
    opt->step(st.params, l.grads, [lr](const std::string&) { return lr; });
    st.history.steps.push_back({step, lr, l.loss, norm, clipped, l.dropped});

    if (step % tcfg.ckpt_every == 0 || step == tcfg.max_steps) {
      const double v = val.empty() ? l.loss / static_cast<double>(batch.size())
                                   : lcm_validation_loss(st.params, mcfg, val, schedule, tcfg);
      st.history.evals.push_back({step, v});
      if (v < st.best_val) {
        st.best_val = v;
        st.best_step = step;
        st.best_params = st.params;
      }
      if (on_checkpoint) {
        st.adam_m = opt->first_moment();
        st.adam_v = opt->second_moment();
        st.adam_steps = opt->tensor_steps();
        st.rng_state = rng.serialize();
        on_checkpoint(st);
      }
    }
  }
  st.adam_m = opt->first_moment();
  st.adam_v = opt->second_moment();
  st.adam_steps = opt->tensor_steps();
  st.rng_state = rng.serialize();
  return st;
}

std::vector<Eigen::Index> sampler_timesteps(const NoiseSchedule& schedule, Eigen::Index sample_steps) {
  const Eigen::Index top = schedule.steps() - 1;
  const Eigen::Index k = sample_steps <= 0 ? top : std::min(sample_steps, top);
  std::vector<Eigen::Index> ts;
  for (Eigen::Index i = k; i >= 1; --i) {
    const auto t = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(i) * static_cast<double>(top) / static_cast<double>(k)));
    if (ts.empty() || t < ts.back()) ts.push_back(t);
  }
  return ts;
}

Vector sample_next(const TwoTowerParams& params, const LcmModelConfig& cfg, const Prefix& prefix,
                   const NoiseSchedule& schedule, const SamplerOptions& opt, SeededRng& rng) {
  if (!(opt.guidance_scale >= 0)) throw InvalidArgument("sample_next: guidance_scale must be >= 0");
  const Matrix c = contextualize(params, cfg, prefix);
  const Vector context = c.row(c.rows() - 1).transpose();
  Vector x(cfg.dim);
  for (Eigen::Index j = 0; j < cfg.dim; ++j) x(j) = rng.normal();

  const auto ts = sampler_timesteps(schedule, opt.sample_steps);
  const double g = opt.guidance_scale;
  Vector x0_hat = Vector::Zero(cfg.dim);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Eigen::Index t = ts[k];
    x0_hat = denoise(params, cfg, x, t, context, true, schedule);
    if (g != 0.0) {
      const Vector uncond = denoise(params, cfg, x, t, context, false, schedule);
      x0_hat = (1.0 + g) * x0_hat - g * uncond;
    }
    if (k + 1 == ts.size()) break;
    const Eigen::Index next = ts[k + 1];
    Vector eps(cfg.dim);
    if (opt.stochastic) {
      for (Eigen::Index j = 0; j < cfg.dim; ++j) eps(j) = rng.normal();
    } else {
      eps = (x - schedule.alpha(t) * x0_hat) / schedule.sigma(t);
    }
    x = schedule.alpha(next) * x0_hat + schedule.sigma(next) * eps;
  }
  return x0_hat;
}

}  // namespace cembed

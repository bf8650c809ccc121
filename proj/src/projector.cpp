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

#include "cembed/projector.hpp"

#include "cembed/params.hpp"

namespace cembed {

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Attention: return "attention";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
  }
  return "attention";
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "attention") return Pooling::Attention;
  if (s == "mean") return Pooling::Mean;
  if (s == "max") return Pooling::Max;
  throw InvalidArgument("unknown pooling mode '" + s + "'");
}

void ProjectorConfig::validate() const {
  if (frame_dim <= 0 || concept_dim <= 0) throw InvalidArgument("projector: dims must be positive");
  if (heads < 1 || frame_dim % heads != 0) {
    throw InvalidArgument("projector: frame_dim must be divisible by heads");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("projector: dropout_p must be in [0, 1)");
  if (!(init_sigma >= 0.0)) throw InvalidArgument("projector: init_sigma must be >= 0");
  if (positional_encoding && frame_dim % 2 != 0) {
    throw InvalidArgument("projector: positional encoding needs an even frame_dim");
  }
}

ProjectorParams init_projector(const ProjectorConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const auto D = cfg.frame_dim;
  ProjectorParams p;
  if (cfg.temporal_attention) {
    p.temporal = init_attention(D, cfg.init_sigma, rng);
  } else {
    p.temporal = AttentionWeights{Matrix(0, 0), Matrix(0, 0), Matrix(0, 0), Matrix(0, 0)};
  }
  if (cfg.pooling == Pooling::Attention) {
    p.cls = gaussian_sample(rng, 1, D, 0.0, cfg.init_sigma);
    p.pool = init_attention(D, cfg.init_sigma, rng);
  } else {
    p.cls = Matrix(0, 0);
    p.pool = AttentionWeights{Matrix(0, 0), Matrix(0, 0), Matrix(0, 0), Matrix(0, 0)};
  }
  p.out_w = gaussian_sample(rng, cfg.concept_dim, D, 0.0, cfg.init_sigma);
  p.out_b = Matrix::Zero(cfg.concept_dim, 1);
  p.adapter = cfg.encoder_adapter ? Matrix(Matrix::Identity(D, D)) : Matrix(0, 0);
  return p;
}

Matrix temporal_attention(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& x,
                          bool train_mode, SeededRng* rng, AttentionCache* cache) {
  AttentionOptions opt;
  opt.heads = cfg.heads;
  opt.dropout_p = train_mode ? cfg.dropout_p : 0.0;
  return x + attention_forward(params.temporal, x, x, opt, rng, cache);
}

namespace {

Vector pool_rows(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& x,
                 AttentionCache* cache, std::vector<Eigen::Index>* argmax) {
  switch (cfg.pooling) {
    case Pooling::Mean:
      return x.colwise().mean().transpose();
    case Pooling::Max: {
      Vector out(x.cols());
      if (argmax != nullptr) argmax->assign(static_cast<std::size_t>(x.cols()), 0);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index t = 1; t < x.rows(); ++t) {
          if (x(t, j) > x(best, j)) best = t;
        }
        out(j) = x(best, j);
        if (argmax != nullptr) (*argmax)[static_cast<std::size_t>(j)] = best;
      }
      return out;
    }
    case Pooling::Attention:
    default: {
      AttentionOptions opt;
      opt.heads = cfg.heads;
      return attention_forward(params.pool, params.cls, x, opt, nullptr, cache).row(0).transpose();
    }
  }
}

}  // namespace

Vector attention_pool(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& x,
                      AttentionCache* cache) {
  return pool_rows(params, cfg, x, cache, nullptr);
}

Projection project(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& frames,
                   bool train_mode, SeededRng* rng) {
  if (frames.rows() < 1) throw InvalidArgument("project: need at least one frame");
  if (frames.cols() != cfg.frame_dim) {
    throw InvalidArgument("project: frames have width " + std::to_string(frames.cols()) +
                          ", expected " + std::to_string(cfg.frame_dim));
  }
  if (params.out_w.rows() != cfg.concept_dim || params.out_w.cols() != cfg.frame_dim) {
    throw InvalidArgument("project: parameters do not match config");
  }
  Projection r;
  ForwardTrace& tr = r.trace;
  tr.generation = params.generation;
  tr.frames = frames;
  tr.encoded = cfg.encoder_adapter ? Matrix(frames * params.adapter.transpose()) : frames;
  if (cfg.positional_encoding) tr.encoded += sinusoidal_pe(frames.rows(), cfg.frame_dim);
  tr.mixed = cfg.temporal_attention
                 ? temporal_attention(params, cfg, tr.encoded, train_mode, rng, &tr.temporal)
                 : tr.encoded;
  tr.pooled = pool_rows(params, cfg, tr.mixed, &tr.pool, &tr.argmax);
  r.embedding = params.out_w * tr.pooled + params.out_b.col(0);
  return r;
}

ProjectorGrads project_backward(const ProjectorParams& params, const ProjectorConfig& cfg,
                                const ForwardTrace& tr, const Vector& upstream) {
  if (tr.generation != params.generation) {
    throw StaleTraceError("project_backward: parameters changed since the forward pass");
  }
  if (upstream.size() != cfg.concept_dim) throw InvalidArgument("project_backward: gradient size mismatch");
  ProjectorGrads g;
  g.params = zeros_like(params);
  g.params.generation = params.generation;

  g.params.out_w = upstream * tr.pooled.transpose();
  g.params.out_b = upstream;
  const Vector dpooled = params.out_w.transpose() * upstream;

  const Eigen::Index T = tr.mixed.rows();
  Matrix dmixed = Matrix::Zero(T, cfg.frame_dim);
  switch (cfg.pooling) {
    case Pooling::Mean:
      dmixed.rowwise() = dpooled.transpose() / static_cast<double>(T);
      break;
    case Pooling::Max:
      for (Eigen::Index j = 0; j < cfg.frame_dim; ++j) {
        dmixed(tr.argmax[static_cast<std::size_t>(j)], j) = dpooled(j);
      }
      break;
    case Pooling::Attention: {
      const auto ag = attention_backward(params.pool, tr.pool, dpooled.transpose());
      g.params.pool = ag.dw;
      g.params.cls = ag.dxq;
      dmixed = ag.dxkv;
      break;
    }
  }

  Matrix dencoded = dmixed;
  if (cfg.temporal_attention) {
    const auto ag = attention_backward(params.temporal, tr.temporal, dmixed);
    g.params.temporal = ag.dw;
    dencoded += ag.dxq + ag.dxkv;
  }
  if (cfg.encoder_adapter) {
    g.params.adapter = dencoded.transpose() * tr.frames;
    g.frames = dencoded * params.adapter;
  } else {
    g.frames = dencoded;
  }
  return g;
}

Matrix project_all(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& frames,
                   Eigen::Index frames_per_sample) {
  const Eigen::Index n = frames.rows() / frames_per_sample;
  Matrix out(n, cfg.concept_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = project(params, cfg, frames.middleRows(i * frames_per_sample, frames_per_sample))
                     .embedding.transpose();
  }
  return out;
}

}  // namespace cembed

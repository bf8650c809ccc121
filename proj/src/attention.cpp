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

#include "cembed/attention.hpp"

#include <cmath>
#include <limits>

namespace cembed {

Matrix sinusoidal_pe(Eigen::Index positions, Eigen::Index dim) {
  if (dim % 2 != 0) throw InvalidArgument("sinusoidal_pe: dimension must be even");
  Matrix pe(positions, dim);
  for (Eigen::Index t = 0; t < positions; ++t) {
    for (Eigen::Index i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) / freq;
      pe(t, 2 * i) = std::sin(angle);
      pe(t, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

AttentionWeights init_attention(Eigen::Index dim, double sigma, SeededRng& rng) {
  AttentionWeights w;
  w.wq = gaussian_sample(rng, dim, dim, 0.0, sigma);
  w.wk = gaussian_sample(rng, dim, dim, 0.0, sigma);
  w.wv = gaussian_sample(rng, dim, dim, 0.0, sigma);
  w.wo = gaussian_sample(rng, dim, dim, 0.0, sigma);
  return w;
}

Matrix attention_forward(const AttentionWeights& w, const Matrix& xq, const Matrix& xkv,
                         const AttentionOptions& opt, SeededRng* rng, AttentionCache* cache) {
  const Eigen::Index dim = w.wq.rows();
  if (xq.cols() != dim || xkv.cols() != dim) throw InvalidArgument("attention: input width mismatch");
  if (opt.heads < 1 || dim % opt.heads != 0) {
    throw InvalidArgument("attention: width must be divisible by heads");
  }
  if (opt.causal && xq.rows() != xkv.rows()) {
    throw InvalidArgument("attention: causal mask needs equal query/key lengths");
  }
  const bool dropout = opt.dropout_p > 0.0;
  if (dropout && rng == nullptr) throw InvalidArgument("attention: dropout needs an rng");

  const Eigen::Index dh = dim / opt.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index tq = xq.rows();
  const Eigen::Index tk = xkv.rows();

  Matrix q = xq * w.wq.transpose();
  Matrix k = xkv * w.wk.transpose();
  Matrix v = xkv * w.wv.transpose();
  Matrix heads_out(tq, dim);
  std::vector<Matrix> probs, keep;

  for (Eigen::Index h = 0; h < opt.heads; ++h) {
    const Matrix scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
    Matrix p = Matrix::Zero(tq, tk);
    for (Eigen::Index i = 0; i < tq; ++i) {
      const Eigen::Index visible = opt.causal ? i + 1 : tk;
      const double m = scores.row(i).head(visible).maxCoeff();
      double total = 0.0;
      for (Eigen::Index j = 0; j < visible; ++j) {
        p(i, j) = std::exp(scores(i, j) - m);
        total += p(i, j);
      }
      p.row(i).head(visible) /= total;
    }
    Matrix used = p;
    if (dropout) {
      Matrix mask(tq, tk);
      const double inv = 1.0 / (1.0 - opt.dropout_p);
      for (Eigen::Index i = 0; i < tq; ++i) {
        for (Eigen::Index j = 0; j < tk; ++j) mask(i, j) = rng->bernoulli(opt.dropout_p) ? 0.0 : inv;
      }
      used = p.cwiseProduct(mask);
      keep.push_back(std::move(mask));
    }
    heads_out.middleCols(h * dh, dh) = used * v.middleCols(h * dh, dh);
    probs.push_back(std::move(p));
  }

  Matrix out = heads_out * w.wo.transpose();
  if (cache != nullptr) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads_out = std::move(heads_out);
    cache->probs = std::move(probs);
    cache->keep = std::move(keep);
    cache->heads = opt.heads;
    cache->causal = opt.causal;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp) {
  const Vector inner = p.cwiseProduct(dp).rowwise().sum();
  return p.cwiseProduct(dp.colwise() - inner);
}

AttentionGrads attention_backward(const AttentionWeights& w, const AttentionCache& c,
                                  const Matrix& dout) {
  const Eigen::Index dim = w.wq.rows();
  const Eigen::Index dh = dim / c.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionGrads g;
  g.dw.wo = dout.transpose() * c.heads_out;
  const Matrix dheads = dout * w.wo;

  Matrix dq(c.q.rows(), dim), dk(c.k.rows(), dim), dv(c.v.rows(), dim);
  const bool dropout = !c.keep.empty();
  for (Eigen::Index h = 0; h < c.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const Matrix& p = c.probs[hs];
    const Matrix used = dropout ? Matrix(p.cwiseProduct(c.keep[hs])) : p;
    const auto dh_out = dheads.middleCols(h * dh, dh);
    Matrix dused = dh_out * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = used.transpose() * dh_out;
    if (dropout) dused = dused.cwiseProduct(c.keep[hs]);
    const Matrix dscores = softmax_rows_backward(p, dused) * scale;
    dq.middleCols(h * dh, dh) = dscores * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = dscores.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.dw.wq = dq.transpose() * c.xq;
  g.dw.wk = dk.transpose() * c.xkv;
  g.dw.wv = dv.transpose() * c.xkv;
  g.dxq = dq * w.wq;
  g.dxkv = dk * w.wk + dv * w.wv;
  return g;
}

}  // namespace cembed

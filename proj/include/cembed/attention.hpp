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

#include <vector>

#include "cembed/numerics.hpp"
#include "cembed/rng.hpp"

namespace cembed {

/// Sinusoidal position table: row t, column 2i is sin(t / 10000^(2i/D)),
/// column 2i+1 the matching cosine. D must be even.
Matrix sinusoidal_pe(Eigen::Index positions, Eigen::Index dim);

/// Projections of a multi-head attention block. Each maps a row vector x to
/// x * W^T, i.e. W acts on column vectors.
struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // D x D

  template <class F>
  void visit(F&& f, const std::string& prefix = "") {
    f(prefix + "wq", wq);
    f(prefix + "wk", wk);
    f(prefix + "wv", wv);
    f(prefix + "wo", wo);
  }
  template <class F>
  void visit(F&& f, const std::string& prefix = "") const {
    f(prefix + "wq", wq);
    f(prefix + "wk", wk);
    f(prefix + "wv", wv);
    f(prefix + "wo", wo);
  }
};

AttentionWeights init_attention(Eigen::Index dim, double sigma, SeededRng& rng);

/// Everything the backward pass needs from one forward call.
struct AttentionCache {
  Matrix xq, xkv;
  Matrix q, k, v;            // projected, all heads side by side
  Matrix heads_out;          // concatenated per-head outputs (before wo)
  std::vector<Matrix> probs; // per head, softmax weights before dropout
  std::vector<Matrix> keep;  // per head, dropout multipliers (empty when off)
  Eigen::Index heads = 1;
  bool causal = false;
};

struct AttentionOptions {
  Eigen::Index heads = 1;
  bool causal = false;      // query i sees keys j <= i (requires equal lengths)
  double dropout_p = 0.0;   // applied to attention weights; needs an rng
};

/// Scaled dot-product multi-head attention, scores divided by sqrt(D / heads).
/// Returns the Tq x D output (after the output projection, no residual).
Matrix attention_forward(const AttentionWeights& w, const Matrix& xq, const Matrix& xkv,
                         const AttentionOptions& opt, SeededRng* rng, AttentionCache* cache);

struct AttentionGrads {
  AttentionWeights dw;
  Matrix dxq, dxkv;
};

AttentionGrads attention_backward(const AttentionWeights& w, const AttentionCache& cache,
                                  const Matrix& dout);

/// Row-wise softmax backward: given p = softmax(s) and dL/dp, returns dL/ds.
Matrix softmax_rows_backward(const Matrix& p, const Matrix& dp);

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace cembed

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
#include <string>
#include <vector>

#include "cembed/attention.hpp"
#include "cembed/numerics.hpp"
#include "cembed/rng.hpp"

namespace cembed {

enum class Pooling { Attention, Mean, Max };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

/// Connector from per-frame features to one concept-space embedding.
struct ProjectorConfig {
  Eigen::Index frame_dim = 1536;   // D
  Eigen::Index concept_dim = 1024; // d
  Eigen::Index heads = 8;
  double dropout_p = 0.1;          // on temporal attention weights, training only
  Pooling pooling = Pooling::Attention;
  double init_sigma = 1e-5;
  bool temporal_attention = true;  // false: frames go straight to pooling
  bool positional_encoding = true;
  bool encoder_adapter = false;    // trainable D x D map on frames (stands in for encoder fine-tuning)

  void validate() const;
};

/// All trainable tensors of the connector. Unused blocks (pooling attention
/// under mean/max pooling, the adapter when disabled) are kept as 0 x 0.
struct ProjectorParams {
  AttentionWeights temporal;
  Matrix cls;         // 1 x D query token for attention pooling
  AttentionWeights pool;
  Matrix out_w;       // d x D
  Matrix out_b;       // d x 1
  Matrix adapter;     // D x D or empty

  /// Bumped by every in-place update; forward traces record it.
  std::uint64_t generation = 0;

  template <class F>
  void visit(F&& f) {
    temporal.visit(f, "temporal.");
    f("cls", cls);
    pool.visit(f, "pool.");
    f("out.w", out_w);
    f("out.b", out_b);
    f("adapter", adapter);
  }
  template <class F>
  void visit(F&& f) const {
    temporal.visit(f, "temporal.");
    f("cls", cls);
    pool.visit(f, "pool.");
    f("out.w", out_w);
    f("out.b", out_b);
    f("adapter", adapter);
  }
};

/// Weights and the CLS token ~ N(0, init_sigma^2); bias zero; adapter identity.
ProjectorParams init_projector(const ProjectorConfig& cfg, SeededRng& rng);

/// Output of temporal self-attention with the residual: X + Attn(X).
Matrix temporal_attention(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& x,
                          bool train_mode, SeededRng* rng, AttentionCache* cache = nullptr);

/// Pools T x D rows into one D-vector according to cfg.pooling.
Vector attention_pool(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& x,
                      AttentionCache* cache = nullptr);

/// Cached activations of one project() call.
struct ForwardTrace {
  std::uint64_t generation = 0;
  Matrix frames;       // raw input
  Matrix encoded;      // after adapter and positional encoding
  Matrix mixed;        // after temporal attention
  Vector pooled;
  AttentionCache temporal;
  AttentionCache pool;
  std::vector<Eigen::Index> argmax;  // max pooling winners per column
};

struct Projection {
  Vector embedding;
  ForwardTrace trace;
};

/// out_w * pool(temporal(adapter(frames) + PE)) + out_b.
/// Dropout runs only when train_mode is set (and then needs rng).
Projection project(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& frames,
                   bool train_mode = false, SeededRng* rng = nullptr);

struct ProjectorGrads {
  ProjectorParams params;
  Matrix frames;
};

/// Reverse pass for one trace. Throws StaleTraceError if params changed since
/// the forward call.
ProjectorGrads project_backward(const ProjectorParams& params, const ProjectorConfig& cfg,
                                const ForwardTrace& trace, const Vector& upstream);

/// Embeds every sample of a frames block (rows i*T..(i+1)*T) in eval mode.
Matrix project_all(const ProjectorParams& params, const ProjectorConfig& cfg, const Matrix& frames,
                   Eigen::Index frames_per_sample);

}  // namespace cembed

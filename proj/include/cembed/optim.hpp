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

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cembed/params.hpp"

namespace cembed {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam over any parameter struct with a visit() hook.
///
/// A tensor whose learning rate is exactly zero for a step is skipped: its
/// value, moments and step count stay untouched (a frozen tensor).
template <class P>
class AdamW {
 public:
  AdamW(const P& like, AdamWConfig cfg) : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like)) {
    like.visit([&](const std::string&, const Matrix&) { steps_.push_back(0); });
  }

  const AdamWConfig& config() const { return cfg_; }
  const P& first_moment() const { return m_; }
  const P& second_moment() const { return v_; }
  const std::vector<std::uint64_t>& tensor_steps() const { return steps_; }

  void restore(P m, P v, std::vector<std::uint64_t> steps) {
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = std::move(steps);
  }

  void step(P& params, const P& grads, const std::function<double(const std::string&)>& lr_for) {
    std::vector<const Matrix*> g;
    grads.visit([&](const std::string&, const Matrix& t) { g.push_back(&t); });
    std::vector<Matrix*> m, v;
    m_.visit([&](const std::string&, Matrix& t) { m.push_back(&t); });
    v_.visit([&](const std::string&, Matrix& t) { v.push_back(&t); });
    std::size_t k = 0;
    params.visit([&](const std::string& name, Matrix& p) {
      const std::size_t i = k++;
      const double lr = lr_for(name);
      if (lr == 0.0 || p.size() == 0) return;
      const std::uint64_t t = ++steps_[i];
      *m[i] = cfg_.beta1 * *m[i] + (1.0 - cfg_.beta1) * *g[i];
      *v[i] = cfg_.beta2 * *v[i] + (1.0 - cfg_.beta2) * g[i]->cwiseAbs2();
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
      const Matrix update =
          (m[i]->array() / bc1) / ((v[i]->array() / bc2).sqrt() + cfg_.eps);
      p -= lr * (update + cfg_.weight_decay * p);
    });
    ++params.generation;
  }

 private:
  AdamWConfig cfg_;
  P m_, v_;
  std::vector<std::uint64_t> steps_;
};

/// Scales grads so their global L2 norm is at most max_norm. Returns the norm
/// before clipping.
template <class P>
double clip_grad_norm(P& grads, double max_norm) {
  const double norm = std::sqrt(squared_norm(grads));
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    grads.visit([&](const std::string&, Matrix& t) { t *= s; });
    // Rounding can leave the rescaled norm an ulp above the bound.
    while (std::sqrt(squared_norm(grads)) > max_norm) {
      grads.visit([](const std::string&, Matrix& t) { t *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon(); });
    }
  }
  return norm;
}

/// Linear warmup 0 -> peak over `warmup` steps, then cosine peak -> final at `total`.
inline double warmup_cosine(std::uint64_t step, std::uint64_t warmup, std::uint64_t total, double peak,
                            double final_lr) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  return final_lr + 0.5 * (peak - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace cembed

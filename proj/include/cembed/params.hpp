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

#include <string>
#include <utility>

#include "cembed/numerics.hpp"

namespace cembed {

// Parameter structs expose their tensors through a member
//   template <class F> void visit(F&& f)   // f(const std::string& name, Matrix& t)
// plus a const overload. Everything below (flattening, optimizers,
// checkpoints) is written against that one hook.

template <class P>
Eigen::Index parameter_count(const P& p) {
  Eigen::Index n = 0;
  p.visit([&](const std::string&, const Matrix& t) { n += t.size(); });
  return n;
}

template <class P>
Vector flatten(const P& p) {
  Vector out(parameter_count(p));
  Eigen::Index k = 0;
  p.visit([&](const std::string&, const Matrix& t) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      for (Eigen::Index i = 0; i < t.rows(); ++i) out(k++) = t(i, j);
    }
  });
  return out;
}

template <class P>
void unflatten(const Vector& v, P& p) {
  if (v.size() != parameter_count(p)) throw InvalidArgument("unflatten: size mismatch");
  Eigen::Index k = 0;
  p.visit([&](const std::string&, Matrix& t) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = v(k++);
    }
  });
}

/// Same shapes as `p`, all zeros.
template <class P>
P zeros_like(const P& p) {
  P z = p;
  z.visit([](const std::string&, Matrix& t) { t.setZero(); });
  return z;
}

/// a += scale * b, tensor by tensor.
template <class P>
void accumulate(P& a, const P& b, double scale = 1.0) {
  std::vector<const Matrix*> src;
  b.visit([&](const std::string&, const Matrix& t) { src.push_back(&t); });
  std::size_t k = 0;
  a.visit([&](const std::string&, Matrix& t) { t += scale * *src[k++]; });
}

template <class P>
double squared_norm(const P& p) {
  double s = 0.0;
  p.visit([&](const std::string&, const Matrix& t) { s += t.squaredNorm(); });
  return s;
}

template <class P>
bool all_finite(const P& p) {
  bool ok = true;
  p.visit([&](const std::string&, const Matrix& t) { ok = ok && t.allFinite(); });
  return ok;
}

}  // namespace cembed

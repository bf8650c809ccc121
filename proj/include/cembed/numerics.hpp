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

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "cembed/errors.hpp"
#include "cembed/rng.hpp"

namespace cembed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Floor applied to covariance eigenvalues before taking logs.
inline constexpr double kEigenvalueFloor = 1e-12;

/// Sample covariance of the rows of a data matrix.
struct CovarianceSummary {
  Matrix cov;    // d x d, unbiased (n - 1 denominator)
  Vector mean;   // d
  Eigen::Index n = 0;
};

/// i.i.d. N(mu, sigma^2) entries drawn row by row from the stream.
Matrix gaussian_sample(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double mu = 0.0,
                       double sigma = 1.0);

/// Numerically stable softmax (max-shifted).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  const auto na = a.norm();
  const auto nb = b.norm();
  if (!(na > 0) || !(nb > 0)) {
    throw InvalidArgument("cosine_similarity: zero-norm input");
  }
  const auto c = a.dot(b) / (na * nb);
  // Rounding can push |c| a hair past 1.
  return std::clamp(c, decltype(c)(-1), decltype(c)(1));
}

CovarianceSummary covariance_matrix(const Matrix& x);

/// sum_i log(max(lambda_i, floor)) over the eigenvalues of a symmetric matrix.
double logdet_psd(const Matrix& cov, double floor = kEigenvalueFloor, double sym_tol = 1e-9);

/// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(const Vector& v);

/// Spearman rank correlation with average ranks for ties.
double spearman_rank_corr(const Vector& a, const Vector& b);

/// Result of a central finite-difference comparison.
struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  Vector numeric;
};

/// Compares `analytic` against central differences of `f` at `point`.
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, abs_floor); the
/// floor keeps coordinates whose true gradient is ~0 from dominating on
/// round-off alone.
GradCheckResult grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic,
                           const Vector& point, double eps = 1e-5, double abs_floor = 1e-6);

}  // namespace cembed

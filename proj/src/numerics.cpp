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

#include "cembed/numerics.hpp"

#include <algorithm>
#include <numeric>

namespace cembed {

Matrix gaussian_sample(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double mu,
                       double sigma) {
  if (!(sigma >= 0)) throw InvalidArgument("gaussian_sample: sigma must be >= 0");
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal(mu, sigma);
  }
  // sigma == 0 must give exactly mu, not mu + 0 * z with signed zeros.
  if (sigma == 0) out.setConstant(mu);
  return out;
}

CovarianceSummary covariance_matrix(const Matrix& x) {
  if (x.rows() < 2) throw InvalidArgument("covariance_matrix: need at least 2 rows");
  CovarianceSummary s;
  s.n = x.rows();
  s.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  // Exact symmetry regardless of summation order.
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

double logdet_psd(const Matrix& cov, double floor, double sym_tol) {
  if (cov.rows() != cov.cols()) throw InvalidArgument("logdet_psd: matrix must be square");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) {
    throw InvalidArgument("logdet_psd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("logdet_psd: eigensolver failed");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    acc += std::log(std::max(eig.eigenvalues()(i), floor));
  }
  return acc;
}

std::vector<double> average_ranks(const Vector& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v(a) < v(b); });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v(order[j]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman_rank_corr(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidArgument("spearman_rank_corr: length mismatch");
  if (a.size() < 2) throw InvalidArgument("spearman_rank_corr: need at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const Eigen::Map<const Vector> va(ra.data(), a.size());
  const Eigen::Map<const Vector> vb(rb.data(), b.size());
  const Vector ca = va.array() - va.mean();
  const Vector cb = vb.array() - vb.mean();
  const double sa = ca.squaredNorm();
  const double sb = cb.squaredNorm();
  if (sa == 0.0 || sb == 0.0) {
    throw InvalidArgument("spearman_rank_corr: constant input, correlation undefined");
  }
  return std::clamp(ca.dot(cb) / std::sqrt(sa * sb), -1.0, 1.0);
}

GradCheckResult grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic,
                           const Vector& point, double eps, double abs_floor) {
  if (analytic.size() != point.size()) throw InvalidArgument("grad_check: size mismatch");
  GradCheckResult r;
  r.numeric.resize(point.size());
  Vector x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + eps;
    const double fp = f(x);
    x(i) = orig - eps;
    const double fm = f(x);
    x(i) = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("grad_check: non-finite function value at coordinate " +
                               std::to_string(i));
    }
    const double num = (fp - fm) / (2.0 * eps);
    r.numeric(i) = num;
    const double denom = std::max({std::abs(analytic(i)), std::abs(num), abs_floor});
    const double rel = std::abs(analytic(i) - num) / denom;
    if (rel > r.max_rel_error || r.worst_index < 0) {
      r.max_rel_error = std::max(rel, r.max_rel_error);
      if (rel >= r.max_rel_error) r.worst_index = i;
    }
  }
  return r;
}

}  // namespace cembed

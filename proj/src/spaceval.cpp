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

#include "cembed/spaceval.hpp"

#include <fstream>
#include <numeric>

namespace cembed {
namespace {

Matrix normalized_rows(const Matrix& x, const char* what) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (!(n > 0)) {
      throw InvalidArgument(std::string(what) + ": zero-norm row " + std::to_string(i));
    }
    out.row(i) = x.row(i) / n;
  }
  return out;
}

RetrievalSummary summarize(const RetrievalMetrics& m) { return {m.r1, m.r5, m.r10, m.mrr}; }

std::vector<Eigen::Index> diagonal(Eigen::Index n) {
  std::vector<Eigen::Index> g(static_cast<std::size_t>(n));
  std::iota(g.begin(), g.end(), 0);
  return g;
}

}  // namespace

SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& targets) {
  if (queries.cols() != targets.cols()) throw InvalidArgument("similarity_matrix: width mismatch");
  SimilarityMatrix s;
  s.scores = (normalized_rows(queries, "similarity_matrix(queries)") *
              normalized_rows(targets, "similarity_matrix(targets)").transpose())
                 .cwiseMax(-1.0)
                 .cwiseMin(1.0);
  s.query_ids.resize(static_cast<std::size_t>(queries.rows()));
  s.target_ids.resize(static_cast<std::size_t>(targets.rows()));
  std::iota(s.query_ids.begin(), s.query_ids.end(), 0);
  std::iota(s.target_ids.begin(), s.target_ids.end(), 0);
  return s;
}

std::uint64_t gold_rank(const SimilarityMatrix& s, Eigen::Index row, Eigen::Index gold) {
  const bool by_index = s.target_ids.empty();
  if (!by_index && static_cast<Eigen::Index>(s.target_ids.size()) != s.scores.cols()) {
    throw InvalidArgument("gold_rank: target id count does not match the score columns");
  }
  auto id = [&](Eigen::Index j) {
    return by_index ? static_cast<std::uint64_t>(j) : s.target_ids[static_cast<std::size_t>(j)];
  };
  const double g = s.scores(row, gold);
  const auto gid = id(gold);
  std::uint64_t ahead = 0;
  for (Eigen::Index j = 0; j < s.scores.cols(); ++j) {
    const double v = s.scores(row, j);
    if (v > g || (v == g && id(j) < gid)) ++ahead;
  }
  return ahead + 1;
}

RetrievalMetrics retrieval_metrics(const SimilarityMatrix& s, const std::vector<Eigen::Index>& gold) {
  const Eigen::Index n = s.scores.rows();
  if (n == 0) throw InvalidArgument("retrieval_metrics: no queries");
  if (static_cast<Eigen::Index>(gold.size()) != n) {
    throw InvalidArgument("retrieval_metrics: every query needs a gold target");
  }
  RetrievalMetrics m;
  m.ranks.resize(gold.size());
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double rr = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index g = gold[static_cast<std::size_t>(i)];
    if (g < 0 || g >= s.scores.cols()) {
      throw InvalidArgument("retrieval_metrics: gold target missing for query " + std::to_string(i));
    }
    const auto r = gold_rank(s, i, g);
    m.ranks[static_cast<std::size_t>(i)] = r;
    hit1 += r <= 1;
    hit5 += r <= 5;
    hit10 += r <= 10;
    rr += 1.0 / static_cast<double>(r);
  }
  const double dn = static_cast<double>(n);
  m.r1 = static_cast<double>(hit1) / dn;
  m.r5 = static_cast<double>(hit5) / dn;
  m.r10 = static_cast<double>(hit10) / dn;
  m.mrr = rr / dn;
  return m;
}

ConsistencyResult alignment_consistency(const Matrix& zv, const Matrix& zt) {
  if (zv.rows() != zt.rows() || zv.cols() != zt.cols()) {
    throw InvalidArgument("alignment_consistency: shape mismatch");
  }
  const Eigen::Index n = zv.rows();
  if (n < 3) throw InvalidArgument("alignment_consistency: need at least 3 pairs");
  const Matrix cross = similarity_matrix(zv, zt).scores;
  const Matrix text = similarity_matrix(zt, zt).scores;
  ConsistencyResult r;
  double total = 0.0;
  Vector a(n - 1), b(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      a(k) = cross(i, j);
      b(k) = text(i, j);
      ++k;
    }
    if (a.maxCoeff() == a.minCoeff() || b.maxCoeff() == b.minCoeff()) {
      ++r.skipped;
      continue;
    }
    total += spearman_rank_corr(a, b);
    ++r.used;
  }
  r.ac = r.used > 0 ? total / static_cast<double>(r.used) : 0.0;
  return r;
}

SpaceStats space_stats(const Matrix& z) {
  const auto cov = covariance_matrix(z);
  SpaceStats s;
  s.trace = cov.cov.trace();
  s.logdet = logdet_psd(cov.cov);
  s.mean_norm = z.rowwise().norm().mean();
  return s;
}

Eigen::Index nearest_decode(const Vector& z, const Matrix& bank) {
  if (bank.rows() == 0) throw InvalidArgument("nearest_decode: empty bank");
  const double nz = z.norm();
  if (!(nz > 0)) throw InvalidArgument("nearest_decode: zero-norm query");
  Eigen::Index best = -1;
  double best_cos = -2.0;
  for (Eigen::Index j = 0; j < bank.rows(); ++j) {
    const double nb = bank.row(j).norm();
    if (!(nb > 0)) continue;
    const double c = bank.row(j).dot(z) / (nb * nz);
    if (c > best_cos) {
      best_cos = c;
      best = j;
    }
  }
  if (best < 0) throw InvalidArgument("nearest_decode: bank has only zero rows");
  return best;
}

RoundTripGroup roundtrip_retrieval(const Matrix& zv, const Matrix& bank) {
  RoundTripGroup g;
  const Eigen::Index n = zv.rows();
  if (n == 0) throw InvalidArgument("roundtrip_retrieval: no vision rows");
  Matrix decoded(n, zv.cols());
  double cos_sum = 0.0, dist_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index id = nearest_decode(zv.row(i).transpose(), bank);
    g.decoded.push_back(id);
    decoded.row(i) = bank.row(id);
    cos_sum += cosine_similarity(zv.row(i), bank.row(id));
    dist_sum += (zv.row(i) - bank.row(id)).norm();
  }
  g.retrieval = summarize(retrieval_metrics(similarity_matrix(decoded, zv), diagonal(n)));
  g.mean_cosine = cos_sum / static_cast<double>(n);
  g.mean_distance = dist_sum / static_cast<double>(n);
  return g;
}

RoundTripReport roundtrip_retrieval(const Matrix& zv, const std::map<std::string, Matrix>& banks) {
  RoundTripReport r;
  for (const auto& [name, bank] : banks) r.groups.emplace(name, roundtrip_retrieval(zv, bank));
  return r;
}

void drift_export(const Matrix& zv, const Matrix& z_gold, const Matrix& z_decoded,
                  const std::filesystem::path& path) {
  if (zv.rows() != z_gold.rows() || zv.rows() != z_decoded.rows()) {
    throw InvalidArgument("drift_export: row counts differ");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "cos_gold,cos_decoded,dist_gold,dist_decoded\n";
  for (Eigen::Index i = 0; i < zv.rows(); ++i) {
    out << cosine_similarity(zv.row(i), z_gold.row(i)) << ','
        << cosine_similarity(zv.row(i), z_decoded.row(i)) << ','
        << (zv.row(i) - z_gold.row(i)).norm() << ',' << (zv.row(i) - z_decoded.row(i)).norm() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SpaceReport space_report(const Matrix& zv, const Matrix& zt) {
  if (zv.rows() != zt.rows()) throw InvalidArgument("space_report: row counts differ");
  SpaceReport r;
  r.n = static_cast<std::size_t>(zv.rows());
  const auto gold = diagonal(zv.rows());
  r.t2v = summarize(retrieval_metrics(similarity_matrix(zt, zv), gold));
  r.v2t = summarize(retrieval_metrics(similarity_matrix(zv, zt), gold));
  const auto ac = alignment_consistency(zv, zt);
  r.ac = ac.ac;
  r.ac_skipped = ac.skipped;
  r.ac_t2v = alignment_consistency(zt, zv).ac;
  r.vision = space_stats(zv);
  r.text = space_stats(zt);
  return r;
}

}  // namespace cembed

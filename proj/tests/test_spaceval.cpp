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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "cembed/errors.hpp"
#include "cembed/spaceval.hpp"
#include "oracles.hpp"

namespace cembed {
namespace {

Matrix random_orthogonal(SeededRng& r, Eigen::Index d) {
  Eigen::HouseholderQR<Matrix> qr(gaussian_sample(r, d, d));
  return qr.householderQ();
}

TEST(Similarity, OrthonormalIsIdentityAndOneByOne) {
  const Matrix q = Matrix::Identity(3, 3);
  EXPECT_EQ(similarity_matrix(q, q).scores, q);
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 1, 1;
  EXPECT_NEAR(similarity_matrix(a, b).scores(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Similarity, MatchesLoopOracleAndNamesZeroRow) {
  SeededRng r(1);
  const Matrix q = gaussian_sample(r, 3, 5), t = gaussian_sample(r, 4, 5);
  const auto s = similarity_matrix(q, t);
  const auto o = oracle::similarity(oracle::to_rows(q), oracle::to_rows(t));
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(s.scores(i, j), o[i][j], 1e-12);
  Matrix z = t;
  z.row(2).setZero();
  try {
    similarity_matrix(q, z);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(Retrieval, IdentityAndHandRanks) {
  const auto id = similarity_matrix(Matrix::Identity(4, 4), Matrix::Identity(4, 4));
  const auto m = retrieval_metrics(id, {0, 1, 2, 3});
  EXPECT_EQ(m.r1, 1.0);
  EXPECT_EQ(m.mrr, 1.0);

  SimilarityMatrix s;
  s.scores.resize(3, 5);
  s.scores << 0.9, 0.1, 0.2, 0.3, 0.0,
              0.5, 0.4, 0.1, 0.0, 0.0,
              0.9, 0.8, 0.7, 0.6, 0.1;
  const auto h = retrieval_metrics(s, {0, 1, 3});  // ranks 1, 2, 4
  EXPECT_EQ(h.ranks, (std::vector<std::uint64_t>{1, 2, 4}));
  EXPECT_NEAR(h.mrr, 7.0 / 12.0, 1e-15);
  EXPECT_NEAR(h.r1, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(h.r5, 1.0);
}

TEST(Retrieval, AllTiesFallBackToIdOrder) {
  SimilarityMatrix s;
  s.scores = Matrix::Constant(3, 3, 0.5);
  const auto m = retrieval_metrics(s, {0, 1, 2});
  EXPECT_EQ(m.ranks, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_THROW(retrieval_metrics(s, {0, 1, 3}), InvalidArgument);
  EXPECT_THROW(retrieval_metrics(s, {0, 1}), InvalidArgument);
}

TEST(Retrieval, OracleAgreementAndOrdering) {
  SeededRng r(2);
  for (int k = 0; k < 20; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + r.uniform_index(60));
    const auto m = static_cast<Eigen::Index>(1 + r.uniform_index(60));
    Matrix q = gaussian_sample(r, n, 4), t = gaussian_sample(r, m, 4);
    if (k % 2 == 0) t = (t * 2).array().round() + 0.5;  // ties
    std::vector<Eigen::Index> gold;
    std::vector<std::size_t> og;
    for (Eigen::Index i = 0; i < n; ++i) {
      gold.push_back(static_cast<Eigen::Index>(r.uniform_index(static_cast<std::uint64_t>(m))));
      og.push_back(static_cast<std::size_t>(gold.back()));
    }
    const auto s = similarity_matrix(q, t);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) rows[static_cast<std::size_t>(i)].push_back(s.scores(i, j));
    const auto got = retrieval_metrics(s, gold);
    const auto want = oracle::retrieval(rows, og);
    EXPECT_EQ(got.ranks, want.ranks);
    EXPECT_LE(got.r1, got.r5);
    EXPECT_LE(got.r5, got.r10);
    EXPECT_LE(got.r10, 1.0);
    EXPECT_GE(got.mrr, got.r1);
    EXPECT_GT(got.mrr, 0.0);
  }
}

TEST(Consistency, IdentityRotationAndScale) {
  SeededRng r(3);
  const Matrix zt = gaussian_sample(r, 20, 6);
  EXPECT_NEAR(alignment_consistency(zt, zt).ac, 1.0, 1e-12);
  const Matrix q = random_orthogonal(r, 6);
  EXPECT_NEAR(alignment_consistency(zt * q, zt * q).ac, 1.0, 1e-9);
  const Matrix zv = gaussian_sample(r, 20, 6);
  const double base = alignment_consistency(zv, zt).ac;
  EXPECT_NEAR(alignment_consistency(zv * q, zt * q).ac, base, 1e-9);
  EXPECT_NEAR(alignment_consistency(3.0 * zv, 0.5 * zt).ac, base, 1e-9);
  EXPECT_THROW(alignment_consistency(zv.topRows(2), zt.topRows(2)), InvalidArgument);
}

TEST(Consistency, IndependentSetsNearZero) {
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SeededRng r(100 + seed);
    const Matrix zv = gaussian_sample(r, 50, 16), zt = gaussian_sample(r, 50, 16);
    const double ac = alignment_consistency(zv, zt).ac;
    EXPECT_LT(std::abs(ac), 0.2);
    sum += ac;
  }
  EXPECT_LT(std::abs(sum / 10.0), 0.1);
}

TEST(Consistency, MatchesOracleAndCountsSkipped) {
  SeededRng r(4);
  const Matrix zv = gaussian_sample(r, 12, 5), zt = gaussian_sample(r, 12, 5);
  EXPECT_NEAR(alignment_consistency(zv, zt).ac,
              oracle::alignment_consistency(oracle::to_rows(zv), oracle::to_rows(zt)), 1e-12);
  // All text rows collinear: every text-side list is constant.
  Matrix line(4, 2);
  line << 1, 0, 2, 0, 3, 0, 4, 0;
  const auto c = alignment_consistency(gaussian_sample(r, 4, 2), line);
  EXPECT_EQ(c.skipped, 4u);
  EXPECT_EQ(c.used, 0u);
}

TEST(SpaceStats, HandCaseDegenerateAndNorms) {
  Matrix z(2, 2);
  z << 2, 0, 0, 2;  // covariance [[2,-2],[-2,2]]
  EXPECT_NEAR(space_stats(z).trace, 4.0, 1e-15);
  EXPECT_NEAR(space_stats(z).mean_norm, 2.0, 1e-15);
  const Matrix same = Matrix::Ones(5, 3);
  const auto s = space_stats(same);
  EXPECT_EQ(s.trace, 0.0);
  EXPECT_NEAR(s.logdet, 3.0 * std::log(1e-12), 1e-9);
  SeededRng r(5);
  Matrix u = gaussian_sample(r, 10, 4);
  u.rowwise().normalize();
  EXPECT_NEAR(space_stats(u).mean_norm, 1.0, 1e-15);
  EXPECT_THROW(space_stats(Matrix::Ones(1, 3)), InvalidArgument);
}

TEST(SpaceStats, RotationAndScaling) {
  SeededRng r(6);
  const Matrix z = gaussian_sample(r, 30, 5);
  const double tr = space_stats(z).trace;
  EXPECT_NEAR(space_stats(z * random_orthogonal(r, 5)).trace, tr, 1e-9);
  EXPECT_NEAR(space_stats(3.0 * z).trace, 9.0 * tr, 1e-9);
}

TEST(Nearest, ExactRowTieAndOracle) {
  Matrix bank(3, 2);
  bank << 0, 1, 1, 0, 0, -1;
  EXPECT_EQ(nearest_decode(Vector(bank.row(2).transpose()), bank), 2);
  Vector mid(2);
  mid << 1, 1;
  EXPECT_EQ(nearest_decode(mid, bank), 0);
  EXPECT_THROW(nearest_decode(Vector::Zero(2), bank), InvalidArgument);
  EXPECT_THROW(nearest_decode(mid, Matrix(0, 2)), InvalidArgument);
  SeededRng r(7);
  for (int k = 0; k < 20; ++k) {
    const Matrix b = gaussian_sample(r, 30, 4);
    const Vector z = gaussian_sample(r, 4, 1);
    EXPECT_EQ(static_cast<std::size_t>(nearest_decode(z, b)),
              oracle::nearest(std::vector<double>(z.data(), z.data() + z.size()), oracle::to_rows(b)));
  }
}

TEST(RoundTrip, FixedPointAndNoiseMonotone) {
  SeededRng r(8);
  Matrix gold = gaussian_sample(r, 60, 8);
  gold.rowwise().normalize();
  const auto fixed = roundtrip_retrieval(gold, gold);
  EXPECT_EQ(fixed.retrieval.r1, 1.0);
  EXPECT_NEAR(fixed.mean_cosine, 1.0, 1e-12);
  EXPECT_NEAR(fixed.mean_distance, 0.0, 1e-12);
  const Matrix noisy = gold + 2.0 * gaussian_sample(r, 60, 8);
  EXPECT_LT(roundtrip_retrieval(noisy, gold).retrieval.r1, fixed.retrieval.r1);

  const auto rep = roundtrip_retrieval(gold, std::map<std::string, Matrix>{{"a", gold}, {"b", 2.0 * gold}});
  ASSERT_EQ(rep.groups.size(), 2u);
  EXPECT_EQ(rep.groups.at("b").retrieval.r1, 1.0);
}

TEST(Drift, RowsColumnsAndIdentity) {
  const auto dir = oracle::temp_dir("drift");
  SeededRng r(9);
  const Matrix zv = gaussian_sample(r, 5, 3), zg = gaussian_sample(r, 5, 3), zd = gaussian_sample(r, 5, 3);
  drift_export(zv, zg, zg, dir / "same.csv");
  drift_export(zv, zg, zd, dir / "diff.csv");
  std::ifstream same(dir / "same.csv"), diff(dir / "diff.csv");
  std::string line;
  std::getline(same, line);
  EXPECT_EQ(line, "cos_gold,cos_decoded,dist_gold,dist_decoded");
  int rows = 0;
  while (std::getline(same, line)) {
    std::stringstream ss(line);
    double c1, c2;
    char comma;
    ss >> c1 >> comma >> c2;
    EXPECT_EQ(c1, c2);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
  std::getline(diff, line);
  for (Eigen::Index i = 0; i < 5; ++i) {
    std::getline(diff, line);
    std::stringstream ss(line);
    double v[4];
    char comma;
    ss >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
    EXPECT_NEAR(v[0], zv.row(i).dot(zg.row(i)) / (zv.row(i).norm() * zg.row(i).norm()), 1e-14);
    EXPECT_NEAR(v[3], (zv.row(i) - zd.row(i)).norm(), 1e-14);
  }
  EXPECT_THROW(drift_export(zv, zg.topRows(4), zd, dir / "x.csv"), InvalidArgument);
  EXPECT_THROW(drift_export(zv, zg, zd, dir / "missing" / "x.csv"), IoError);
}

TEST(Report, FieldsAndInvariants) {
  SeededRng r(10);
  const Matrix zt = gaussian_sample(r, 40, 6);
  const Matrix zv = zt + 0.3 * gaussian_sample(r, 40, 6);
  const auto rep = space_report(zv, zt);
  EXPECT_EQ(rep.n, 40u);
  for (const auto& m : {rep.t2v, rep.v2t}) {
    EXPECT_LE(m.r1, m.r5);
    EXPECT_LE(m.r5, m.r10);
    EXPECT_GE(m.mrr, m.r1);
  }
  EXPECT_GT(rep.ac, 0.5);
  EXPECT_NEAR(rep.text.trace, space_stats(zt).trace, 0.0);
}

}  // namespace
}  // namespace cembed

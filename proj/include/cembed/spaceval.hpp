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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cembed/numerics.hpp"

namespace cembed {

/// Cosine similarities between query rows and target rows.
struct SimilarityMatrix {
  Matrix scores;                          // n_queries x n_targets
  std::vector<std::uint64_t> query_ids;
  std::vector<std::uint64_t> target_ids;  // empty: column index
};

/// Ids default to row indices.
SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& targets);

struct RetrievalMetrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double mrr = 0.0;
  std::vector<std::uint64_t> ranks;  // 1-based gold rank per query
};

/// 1-based rank of `gold` in row `row`: higher similarity first, equal
/// similarity broken by ascending target id.
std::uint64_t gold_rank(const SimilarityMatrix& s, Eigen::Index row, Eigen::Index gold);

/// gold[i] is the target column that query i should retrieve.
RetrievalMetrics retrieval_metrics(const SimilarityMatrix& s, const std::vector<Eigen::Index>& gold);

struct ConsistencyResult {
  double ac = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // queries with a constant similarity list
};

/// Mean over i of Spearman(cos(zv_i, zt_j), cos(zt_i, zt_j)) over j != i.
ConsistencyResult alignment_consistency(const Matrix& zv, const Matrix& zt);

struct SpaceStats {
  double trace = 0.0;
  double logdet = 0.0;
  double mean_norm = 0.0;
};

SpaceStats space_stats(const Matrix& z);

/// Row of the bank with the highest cosine to z; lowest id wins ties.
Eigen::Index nearest_decode(const Vector& z, const Matrix& bank);

struct RetrievalSummary {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0, mrr = 0.0;
};

struct RoundTripGroup {
  RetrievalSummary retrieval;
  double mean_cosine = 0.0;    // between each vision row and its decoded caption embedding
  double mean_distance = 0.0;  // Euclidean, same pairs
  std::vector<Eigen::Index> decoded;
};

struct RoundTripReport {
  std::map<std::string, RoundTripGroup> groups;
};

/// Decodes each vision row against a caption bank, then queries the vision set
/// with the decoded caption embedding; query i should retrieve row i.
RoundTripGroup roundtrip_retrieval(const Matrix& zv, const Matrix& bank);

/// One group per named bank.
RoundTripReport roundtrip_retrieval(const Matrix& zv, const std::map<std::string, Matrix>& banks);

/// Per-sample CSV: cos_gold,cos_decoded,dist_gold,dist_decoded.
void drift_export(const Matrix& zv, const Matrix& z_gold, const Matrix& z_decoded,
                  const std::filesystem::path& path);

/// Retrieval plus geometry of paired vision/text sets.
struct SpaceReport {
  RetrievalSummary t2v;  // text queries retrieving vision rows
  RetrievalSummary v2t;
  double ac = 0.0;       // vision-query direction
  double ac_t2v = 0.0;   // text-query direction
  std::size_t ac_skipped = 0;
  SpaceStats vision, text;
  std::size_t n = 0;
};

SpaceReport space_report(const Matrix& zv, const Matrix& zt);

}  // namespace cembed

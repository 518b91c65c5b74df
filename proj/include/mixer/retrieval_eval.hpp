#pragma once

#include "mixer/autodiff.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mixer {

// Exact-search index over unit-norm doc embeddings.
struct EmbeddingIndex {
  std::vector<int> ids;  // unique doc ids, one per row
  Mat emb;               // D x d, unit rows

  void validate() const;
};

using RankedList = std::vector<std::pair<int, double>>;  // (doc id, score)

struct Judgment {
  std::vector<int> identical;
  std::vector<int> relevant;  // superset of identical
  std::optional<std::vector<int>> candidates;
};

using Judgments = std::map<int, Judgment>;  // query id -> judgment

struct MetricsReport {
  double identical_at_1 = 0.0;
  double identical_at_5 = 0.0;
  double relevance_at_1 = 0.0;
  double map = 0.0;
  double mrr = 0.0;
  int queries = 0;
  int map_excluded = 0;  // queries with no relevant doc in the candidate set
};

// Exact top-k by dot product, descending; ties broken by ascending doc id.
RankedList search_topk(const Eigen::RowVectorXd& query,
                       const EmbeddingIndex& index, int k);

double identical_at_k(const std::map<int, RankedList>& results,
                      const Judgments& judgments, int k);
double relevance_at_k(const std::map<int, RankedList>& results,
                      const Judgments& judgments, int k);
double mrr(const std::map<int, RankedList>& results,
           const Judgments& judgments);
// AP normalized by relevant docs present in the ranked candidate list;
// queries with no such doc are excluded (count reported via excluded_out).
double mean_average_precision(const std::map<int, RankedList>& results,
                              const Judgments& judgments,
                              int* excluded_out = nullptr);

MetricsReport compute_metrics(const std::map<int, RankedList>& results,
                              const Judgments& judgments);

}  // namespace mixer

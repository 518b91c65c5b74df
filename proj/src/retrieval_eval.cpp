#include "mixer/retrieval_eval.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mixer {

void EmbeddingIndex::validate() const {
  if (emb.rows() != static_cast<Eigen::Index>(ids.size())) {
    throw std::invalid_argument("index: id/row count mismatch");
  }
  std::set<int> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) {
    throw std::invalid_argument("index: duplicate doc ids");
  }
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    if (std::abs(emb.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("index: row not unit-norm");
    }
  }
}

RankedList search_topk(const Eigen::RowVectorXd& query,
                       const EmbeddingIndex& index, int k) {
  if (index.ids.empty()) throw std::invalid_argument("search_topk: empty index");
  if (k < 1 || k > static_cast<int>(index.ids.size())) {
    throw std::invalid_argument("search_topk: k out of range");
  }
  Eigen::VectorXd scores = index.emb * query.transpose();
  RankedList all(index.ids.size());
  for (std::size_t i = 0; i < index.ids.size(); ++i) {
    all[i] = {index.ids[i], scores(static_cast<Eigen::Index>(i))};
  }
  auto better = [](const std::pair<int, double>& a,
                   const std::pair<int, double>& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::partial_sort(all.begin(), all.begin() + k, all.end(), better);
  all.resize(static_cast<std::size_t>(k));
  return all;
}

namespace {

const Judgment& judgment_for(const Judgments& judgments, int qid) {
  auto it = judgments.find(qid);
  if (it == judgments.end()) {
    throw std::out_of_range("metrics: query " + std::to_string(qid) +
                            " missing from judgments");
  }
  return it->second;
}

double hit_at_k(const std::map<int, RankedList>& results,
                const Judgments& judgments, int k, bool use_relevant) {
  if (results.empty()) throw std::invalid_argument("metrics: no results");
  double hits = 0.0;
  for (const auto& [qid, ranked] : results) {
    const Judgment& j = judgment_for(judgments, qid);
    const auto& pool = use_relevant ? j.relevant : j.identical;
    std::set<int> want(pool.begin(), pool.end());
    int depth = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < depth; ++r) {
      if (want.count(ranked[static_cast<std::size_t>(r)].first)) {
        hits += 1.0;
        break;
      }
    }
  }
  return hits / static_cast<double>(results.size());
}

}  // namespace

double identical_at_k(const std::map<int, RankedList>& results,
                      const Judgments& judgments, int k) {
  return hit_at_k(results, judgments, k, false);
}

double relevance_at_k(const std::map<int, RankedList>& results,
                      const Judgments& judgments, int k) {
  return hit_at_k(results, judgments, k, true);
}

double mrr(const std::map<int, RankedList>& results,
           const Judgments& judgments) {
  if (results.empty()) throw std::invalid_argument("metrics: no results");
  double total = 0.0;
  for (const auto& [qid, ranked] : results) {
    const Judgment& j = judgment_for(judgments, qid);
    std::set<int> want(j.identical.begin(), j.identical.end());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (want.count(ranked[r].first)) {
        total += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(results.size());
}

double mean_average_precision(const std::map<int, RankedList>& results,
                              const Judgments& judgments, int* excluded_out) {
  if (results.empty()) throw std::invalid_argument("metrics: no results");
  double total = 0.0;
  int counted = 0;
  int excluded = 0;
  for (const auto& [qid, ranked] : results) {
    const Judgment& j = judgment_for(judgments, qid);
    std::set<int> want(j.relevant.begin(), j.relevant.end());
    int r_total = 0;
    for (const auto& [id, score] : ranked) {
      if (want.count(id)) ++r_total;
    }
    if (r_total == 0) {
      ++excluded;
      continue;
    }
    double ap = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (want.count(ranked[r].first)) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    total += ap / static_cast<double>(r_total);
    ++counted;
  }
  if (excluded_out) *excluded_out = excluded;
  if (counted == 0) return 0.0;
  return total / static_cast<double>(counted);
}

MetricsReport compute_metrics(const std::map<int, RankedList>& results,
                              const Judgments& judgments) {
  MetricsReport rep;
  rep.queries = static_cast<int>(results.size());
  rep.identical_at_1 = identical_at_k(results, judgments, 1);
  rep.identical_at_5 = identical_at_k(results, judgments, 5);
  rep.relevance_at_1 = relevance_at_k(results, judgments, 1);
  rep.mrr = mrr(results, judgments);
  rep.map = mean_average_precision(results, judgments, &rep.map_excluded);
  return rep;
}

}  // namespace mixer

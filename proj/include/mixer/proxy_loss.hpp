#pragma once

#include "mixer/layers.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace mixer {

struct LossConfig {
  double s = 64.0;            // temperature
  double m = 0.5;             // additive angle margin, radians
  double knn_fraction = 0.1;  // K = max(1, round(knn_fraction * C))
  int refresh_interval = 1000;
  bool knn_enabled = false;
  int num_shards = 4;

  void validate() const;
  int top_k(int num_categories) const;
};

// Category-center matrix: one trainable unit-norm row per category id,
// partitioned into contiguous virtual shards.
class ProxyStore {
 public:
  // Rows are registered as the "proxy.w" parameter; init is random unit rows.
  ProxyStore(ParamRegistry& reg, int num_categories, int d, int num_shards,
             std::uint64_t seed);

  int num_categories() const { return c_; }
  Value weights() const { return w_; }
  const std::vector<std::pair<int, int>>& shard_layout() const {
    return shards_;
  }

  // Projects every row back to unit norm (applied after each SGD step).
  void renormalize();

  // Grow the store to `new_c` categories; new rows are random unit vectors.
  void grow(std::uint64_t seed, int new_c);

  // Per-shard dot-product counters, reset with reset_counters().
  const std::vector<std::int64_t>& shard_dot_counts() const { return counts_; }
  std::int64_t total_dot_count() const;
  void reset_counters();

  // w_c . z for every candidate id, computed shard by shard and gathered by
  // ascending category id. `z` is a 1 x d row.
  std::vector<std::pair<int, double>> sharded_logits(
      const Mat& z, const std::vector<int>& candidates);

 private:
  void rebuild_shards(int num_shards);

  int c_;
  int d_;
  Value w_;
  std::vector<std::pair<int, int>> shards_;  // [begin, end) row ranges
  std::vector<std::int64_t> counts_;
};

// Top-K most similar categories per category (self always included,
// ties broken by lower id).
struct ProxySimCache {
  std::vector<std::vector<int>> topk;
  std::int64_t built_at_iter = 0;
  int k = 0;
};

ProxySimCache refresh_cache(const ProxyStore& store, const LossConfig& cfg,
                            std::int64_t iter = 0);

// Additive-angular-margin softmax over proxy cosines, tape-tracked.
// Z: b x d unit rows (tracked); labels: category ids. With knn enabled the
// negative sum runs over the label's cached top-K candidates only.
// Logits are computed through store.sharded_logits, so dot-product counters
// reflect the pruning.
Value margin_loss(Tape& t, const Value& z, const std::vector<int>& labels,
                  ProxyStore& store, const LossConfig& cfg,
                  const ProxySimCache* cache);

}  // namespace mixer

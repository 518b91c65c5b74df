#include "mixer/proxy_loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mixer {

void LossConfig::validate() const {
  if (s <= 0.0) throw std::invalid_argument("loss: s must be > 0");
  if (m < 0.0 || m >= M_PI / 2.0) {
    throw std::invalid_argument("loss: margin must be in [0, pi/2)");
  }
  if (knn_fraction <= 0.0 || knn_fraction > 1.0) {
    throw std::invalid_argument("loss: knn_fraction must be in (0, 1]");
  }
  if (refresh_interval < 1) {
    throw std::invalid_argument("loss: refresh_interval must be >= 1");
  }
  if (num_shards < 1) throw std::invalid_argument("loss: num_shards >= 1");
}

int LossConfig::top_k(int num_categories) const {
  int k = static_cast<int>(std::lround(knn_fraction * num_categories));
  return std::min(num_categories, std::max(1, k));
}

ProxyStore::ProxyStore(ParamRegistry& reg, int num_categories, int d,
                       int num_shards, std::uint64_t seed)
    : c_(num_categories), d_(d) {
  if (num_categories < 1) {
    throw std::invalid_argument("proxy store: need at least one category");
  }
  std::mt19937_64 rng(seed);
  w_ = reg.add("proxy.w", random_unit_rows(rng, num_categories, d));
  rebuild_shards(num_shards);
}

void ProxyStore::rebuild_shards(int num_shards) {
  num_shards = std::min(num_shards, c_);
  shards_.clear();
  int base = c_ / num_shards;
  int extra = c_ % num_shards;
  int begin = 0;
  for (int s = 0; s < num_shards; ++s) {
    int len = base + (s < extra ? 1 : 0);
    shards_.emplace_back(begin, begin + len);
    begin += len;
  }
  counts_.assign(shards_.size(), 0);
}

void ProxyStore::renormalize() {
  for (Eigen::Index i = 0; i < w_->val.rows(); ++i) {
    double nrm = w_->val.row(i).norm();
    if (nrm <= 1e-12) {
      throw std::runtime_error("proxy store: degenerate proxy row");
    }
    w_->val.row(i) /= nrm;
  }
}

void ProxyStore::grow(std::uint64_t seed, int new_c) {
  if (new_c < c_) {
    throw std::invalid_argument("proxy store: cannot shrink");
  }
  if (new_c == c_) return;
  std::mt19937_64 rng(seed);
  Mat fresh = random_unit_rows(rng, new_c - c_, d_);
  Mat grown(new_c, d_);
  grown.topRows(c_) = w_->val;
  grown.bottomRows(new_c - c_) = fresh;
  w_->val = grown;
  w_->grad = Mat::Zero(new_c, d_);
  int num_shards = static_cast<int>(shards_.size());
  c_ = new_c;
  rebuild_shards(num_shards);
}

std::int64_t ProxyStore::total_dot_count() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

void ProxyStore::reset_counters() {
  std::fill(counts_.begin(), counts_.end(), 0);
}

std::vector<std::pair<int, double>> ProxyStore::sharded_logits(
    const Mat& z, const std::vector<int>& candidates) {
  if (z.rows() != 1 || z.cols() != d_) {
    throw std::invalid_argument("sharded_logits: z must be 1 x d");
  }
  std::vector<std::pair<int, double>> out;
  out.reserve(candidates.size());
  std::vector<int> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  // each shard scans its own range; gather is in ascending id order
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    auto [begin, end] = shards_[s];
    for (int id : sorted) {
      if (id < begin || id >= end) continue;
      out.emplace_back(id, w_->val.row(id).dot(z.row(0)));
      ++counts_[s];
    }
  }
  if (out.size() != sorted.size()) {
    throw std::out_of_range("sharded_logits: candidate id outside all shards");
  }
  return out;
}

ProxySimCache refresh_cache(const ProxyStore& store, const LossConfig& cfg,
                            std::int64_t iter) {
  const Mat& w = store.weights()->val;
  int c = store.num_categories();
  int k = cfg.top_k(c);
  ProxySimCache cache;
  cache.built_at_iter = iter;
  cache.k = k;
  cache.topk.resize(static_cast<std::size_t>(c));
  Mat sim = w * w.transpose();
  for (int i = 0; i < c; ++i) {
    std::vector<int> ids(static_cast<std::size_t>(c));
    std::iota(ids.begin(), ids.end(), 0);
    // highest similarity first, ties to the lower id
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
      return a < b;
    });
    cache.topk[static_cast<std::size_t>(i)].assign(ids.begin(),
                                                   ids.begin() + k);
  }
  return cache;
}

Value margin_loss(Tape& t, const Value& z, const std::vector<int>& labels,
                  ProxyStore& store, const LossConfig& cfg,
                  const ProxySimCache* cache) {
  cfg.validate();
  const Eigen::Index b = z->val.rows();
  if (b < 1 || static_cast<std::size_t>(b) != labels.size()) {
    throw std::invalid_argument("margin_loss: batch/label count mismatch");
  }
  const int c = store.num_categories();
  Value w = store.weights();
  for (Eigen::Index i = 0; i < b; ++i) {
    if (std::abs(z->val.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("margin_loss: embedding row not unit-norm");
    }
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw std::out_of_range("margin_loss: label out of range");
    }
  }
  for (Eigen::Index r = 0; r < w->val.rows(); ++r) {
    if (std::abs(w->val.row(r).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("margin_loss: proxy row not unit-norm");
    }
  }
  if (cfg.knn_enabled && cache == nullptr) {
    throw std::invalid_argument("margin_loss: knn enabled but no cache");
  }

  const double cos_m = std::cos(cfg.m);
  const double sin_m = std::sin(cfg.m);

  struct SampleCtx {
    std::vector<int> cand;       // ascending ids
    std::vector<double> p;       // softmax probabilities over cand
    std::vector<double> cosv;    // cosines per candidate
    std::size_t y_pos = 0;
    double dlogit_dcos_y = 0.0;  // d s*cos(theta+m) / d cos(theta)
  };
  std::vector<SampleCtx> ctx(static_cast<std::size_t>(b));

  std::vector<int> all_ids;
  if (!cfg.knn_enabled) {
    all_ids.resize(static_cast<std::size_t>(c));
    std::iota(all_ids.begin(), all_ids.end(), 0);
  }

  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    SampleCtx& sc = ctx[static_cast<std::size_t>(i)];
    int y = labels[static_cast<std::size_t>(i)];
    const std::vector<int>& cand =
        cfg.knn_enabled ? cache->topk[static_cast<std::size_t>(y)] : all_ids;
    auto logits = store.sharded_logits(z->val.row(i), cand);

    std::size_t m_cand = logits.size();
    sc.cand.resize(m_cand);
    sc.cosv.resize(m_cand);
    std::vector<double> scaled(m_cand);
    bool found = false;
    for (std::size_t j = 0; j < m_cand; ++j) {
      sc.cand[j] = logits[j].first;
      double cos_th = logits[j].second;
      sc.cosv[j] = cos_th;
      if (logits[j].first == y) {
        found = true;
        sc.y_pos = j;
        double sin_th = std::sqrt(std::max(0.0, 1.0 - cos_th * cos_th));
        scaled[j] = cfg.s * (cos_th * cos_m - sin_th * sin_m);
        // d cos(theta+m)/d cos(theta) = sin(theta+m)/sin(theta)
        double sin_safe = std::max(sin_th, 1e-12);
        sc.dlogit_dcos_y = cfg.s * (cos_m + sin_m * cos_th / sin_safe);
      } else {
        scaled[j] = cfg.s * cos_th;
      }
    }
    if (!found) {
      throw std::logic_error("margin_loss: label missing from candidate set");
    }
    double mx = *std::max_element(scaled.begin(), scaled.end());
    double denom = 0.0;
    for (double v : scaled) denom += std::exp(v - mx);
    double lse = mx + std::log(denom);
    sc.p.resize(m_cand);
    for (std::size_t j = 0; j < m_cand; ++j) {
      sc.p[j] = std::exp(scaled[j] - lse);
    }
    total += lse - scaled[sc.y_pos];
  }

  Mat out(1, 1);
  out(0, 0) = total / static_cast<double>(b);
  double s = cfg.s;
  return t.record(
      std::move(out),
      [z, w, ctx, b, s](Node& n) {
        double g = n.grad(0, 0) / static_cast<double>(b);
        for (Eigen::Index i = 0; i < b; ++i) {
          const SampleCtx& sc = ctx[static_cast<std::size_t>(i)];
          for (std::size_t j = 0; j < sc.cand.size(); ++j) {
            double dlogit = sc.p[j] - (j == sc.y_pos ? 1.0 : 0.0);
            double dcos = dlogit * (j == sc.y_pos ? sc.dlogit_dcos_y : s);
            double coeff = g * dcos;
            int id = sc.cand[j];
            if (z->requires_grad) z->grad.row(i) += coeff * w->val.row(id);
            if (w->requires_grad) w->grad.row(id) += coeff * z->val.row(i);
          }
        }
      },
      {z, w});
}

}  // namespace mixer

#include "mixer/data_org.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace mixer {

namespace {

// Union-find keyed by sample id, canonical root = smallest member.
class DisjointSets {
 public:
  void ensure(int x) { parent_.try_emplace(x, x); }

  int find(int x) {
    ensure(x);
    int r = x;
    while (parent_[r] != r) r = parent_[r];
    while (parent_[x] != r) {
      int next = parent_[x];
      parent_[x] = r;
      x = next;
    }
    return r;
  }

  void unite(int a, int b) {
    int ra = find(a);
    int rb = find(b);
    if (ra == rb) return;
    if (ra < rb) parent_[rb] = ra;
    else parent_[ra] = rb;
  }

 private:
  std::map<int, int> parent_;
};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_products < 1) throw std::invalid_argument("spec: num_products >= 1");
  if (click_noise_rate < 0.0 || click_noise_rate > 1.0) {
    throw std::invalid_argument("spec: click_noise_rate in [0,1]");
  }
  if (min_docs_per_product < 1 ||
      max_docs_per_product < min_docs_per_product) {
    throw std::invalid_argument("spec: bad docs-per-product bounds");
  }
  if (vocab_size <
      num_products * tokens_per_product +
          ((num_products + family_size - 1) / family_size) * tokens_per_family) {
    throw std::invalid_argument("spec: vocab too small for token layout");
  }
  if (n_raw < 1 || family_size < 1) {
    throw std::invalid_argument("spec: bad dimensions");
  }
  if (exposure_exponent < 0.0) {
    throw std::invalid_argument("spec: exposure_exponent >= 0");
  }
}

CategoryAssignment assign_initial_ids(const std::vector<Sample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("assign_initial_ids: no samples");
  }
  CategoryAssignment out;
  for (const auto& s : samples) out[s.id] = s.id;
  return out;
}

CategoryAssignment merge_by_clicks(const CategoryAssignment& assignment,
                                   const ClickLog& clicks) {
  DisjointSets ds;
  for (const auto& [sid, cat] : assignment) {
    ds.ensure(sid);
    ds.unite(sid, cat);
  }
  for (const auto& rec : clicks) {
    if (!rec.clicked) continue;
    if (!assignment.count(rec.query_id) || !assignment.count(rec.doc_id)) {
      throw std::out_of_range("merge_by_clicks: click references unknown sample");
    }
    ds.unite(rec.query_id, rec.doc_id);
  }
  CategoryAssignment out;
  for (const auto& [sid, cat] : assignment) out[sid] = ds.find(sid);
  return out;
}

std::map<int, Eigen::VectorXd> representative_features(
    const std::vector<Sample>& samples, const CategoryAssignment& assignment) {
  std::map<int, Eigen::VectorXd> sums;
  std::map<int, int> counts;
  for (const auto& s : samples) {
    auto it = assignment.find(s.id);
    if (it == assignment.end()) {
      throw std::out_of_range("representative_features: unassigned sample");
    }
    auto [pos, fresh] = sums.try_emplace(it->second, s.raw);
    if (!fresh) pos->second += s.raw;
    counts[it->second] += 1;
  }
  for (auto& [cat, v] : sums) v /= static_cast<double>(counts[cat]);
  return sums;
}

namespace {

std::vector<int> density_cluster(const std::vector<Eigen::VectorXd>& pts,
                                 double eps, int min_points) {
  // mutual-reachability merge: points within eps are joined when both sides
  // have at least min_points neighbors (self included)
  const int n = static_cast<int>(pts.size());
  std::vector<std::vector<int>> neigh(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if ((pts[i] - pts[j]).norm() <= eps) neigh[i].push_back(j);
    }
  }
  DisjointSets ds;
  for (int i = 0; i < n; ++i) ds.ensure(i);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(neigh[i].size()) < min_points) continue;
    for (int j : neigh[i]) {
      if (static_cast<int>(neigh[j].size()) >= min_points) ds.unite(i, j);
    }
  }
  std::vector<int> label(n);
  for (int i = 0; i < n; ++i) label[i] = ds.find(i);
  return label;
}

std::vector<int> kmeans_cluster(const std::vector<Eigen::VectorXd>& pts,
                                int k, int iters, std::uint64_t seed) {
  const int n = static_cast<int>(pts.size());
  std::mt19937_64 rng(seed);
  // farthest-point seeding: spreads the initial centers across the data so
  // well-separated groups each receive one
  std::uniform_int_distribution<int> first(0, n - 1);
  std::vector<Eigen::VectorXd> centers = {pts[first(rng)]};
  while (static_cast<int>(centers.size()) < k) {
    int far = 0;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      double near_d = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) {
        near_d = std::min(near_d, (pts[i] - c).squaredNorm());
      }
      if (near_d > far_d) {
        far_d = near_d;
        far = i;
      }
    }
    centers.push_back(pts[far]);
  }

  std::vector<int> label(n, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (pts[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        double d = (pts[i] - centers[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (label[i] != best) {
        label[i] = best;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(pts[0].size());
      int cnt = 0;
      for (int i = 0; i < n; ++i) {
        if (label[i] == c) {
          sum += pts[i];
          ++cnt;
        }
      }
      if (cnt > 0) centers[c] = sum / cnt;
    }
    if (!changed) break;
  }
  return label;
}

double percentile_distance(const std::vector<Eigen::VectorXd>& pts,
                           double pct) {
  std::vector<double> d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      d.push_back((pts[i] - pts[j]).norm());
    }
  }
  if (d.empty()) return 0.0;
  std::sort(d.begin(), d.end());
  auto idx = static_cast<std::size_t>(pct * static_cast<double>(d.size() - 1));
  return d[idx];
}

}  // namespace

CategoryAssignment merge_by_clustering(
    const CategoryAssignment& assignment,
    const std::map<int, Eigen::VectorXd>& features, ClusterMethod method,
    const ClusterParams& params) {
  std::vector<int> cats;
  std::vector<Eigen::VectorXd> pts;
  for (const auto& [cat, f] : features) {
    cats.push_back(cat);
    pts.push_back(f);
  }
  if (pts.empty()) return assignment;

  std::vector<int> label;
  if (method == ClusterMethod::kKMeans) {
    if (params.k < 1 || params.k > static_cast<int>(pts.size())) {
      throw std::invalid_argument("merge_by_clustering: bad k");
    }
    label = kmeans_cluster(pts, params.k, params.kmeans_iters, params.seed);
  } else {
    double eps = params.eps;
    if (eps <= 0.0) eps = percentile_distance(pts, 0.05);
    if (eps <= 0.0 && params.eps < 0.0) {
      throw std::invalid_argument("merge_by_clustering: eps must be > 0");
    }
    label = density_cluster(pts, eps, params.min_points);
  }

  DisjointSets ds;
  for (int c : cats) ds.ensure(c);
  std::map<int, int> cluster_rep;  // cluster label -> first category
  for (std::size_t i = 0; i < cats.size(); ++i) {
    auto [it, fresh] = cluster_rep.try_emplace(label[i], cats[i]);
    if (!fresh) ds.unite(it->second, cats[i]);
  }
  CategoryAssignment out;
  for (const auto& [sid, cat] : assignment) out[sid] = ds.find(cat);
  return out;
}

std::map<int, int> densify_categories(const CategoryAssignment& assignment) {
  std::set<int> cats;
  for (const auto& [sid, cat] : assignment) cats.insert(cat);
  std::map<int, int> dense;
  int next = 0;
  for (int c : cats) dense[c] = next++;
  return dense;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int P = spec.num_products;
  const int families = (P + spec.family_size - 1) / spec.family_size;

  // family prototypes, product prototypes = family + scaled offset
  std::vector<Eigen::VectorXd> family_proto(families);
  for (auto& f : family_proto) {
    f = Eigen::VectorXd::NullaryExpr(spec.n_raw,
                                     [&](Eigen::Index) { return gauss(rng); });
  }
  std::vector<Eigen::VectorXd> proto(P);
  std::vector<int> family_of(P);
  for (int p = 0; p < P; ++p) {
    family_of[p] = p / spec.family_size;
    Eigen::VectorXd off = Eigen::VectorXd::NullaryExpr(
        spec.n_raw, [&](Eigen::Index) { return gauss(rng); });
    proto[p] = family_proto[family_of[p]] + spec.image_distinct_scale * off;
  }

  // token layout: product-specific tokens first, then family tokens
  std::vector<std::vector<int>> prod_tokens(P);
  int next_tok = 0;
  for (int p = 0; p < P; ++p) {
    for (int i = 0; i < spec.tokens_per_product; ++i) {
      prod_tokens[p].push_back(next_tok++);
    }
  }
  std::vector<std::vector<int>> fam_tokens(families);
  for (int f = 0; f < families; ++f) {
    for (int i = 0; i < spec.tokens_per_family; ++i) {
      fam_tokens[f].push_back(next_tok++);
    }
  }

  // exposure skew: doc counts proportional to (rank+1)^-exponent
  std::vector<double> weight(P);
  for (int p = 0; p < P; ++p) {
    weight[p] = std::pow(static_cast<double>(p + 1), -spec.exposure_exponent);
  }
  double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
  const double total_docs = static_cast<double>(P) * spec.avg_docs_per_product;
  std::vector<int> docs_per(P);
  for (int p = 0; p < P; ++p) {
    int cnt = static_cast<int>(std::lround(total_docs * weight[p] / wsum));
    docs_per[p] = std::clamp(cnt, spec.min_docs_per_product,
                             spec.max_docs_per_product);
  }

  SyntheticData out;
  int next_id = 0;
  const double doc_noise = spec.doc_feature_noise < 0.0
                               ? spec.feature_noise
                               : spec.doc_feature_noise;
  auto noisy = [&](const Eigen::VectorXd& base, double sigma) {
    return Eigen::VectorXd(base + sigma * Eigen::VectorXd::NullaryExpr(
                                              spec.n_raw, [&](Eigen::Index) {
                                                return gauss(rng);
                                              }));
  };
  int pos_tok_base = -1;
  if (spec.subject_position_token) {
    pos_tok_base = next_tok;
    next_tok += spec.num_distractors + 1;
  }
  auto make_tokens = [&](int p, int subject_block) {
    std::vector<int> toks;
    if (pos_tok_base >= 0) toks.push_back(pos_tok_base + subject_block);
    toks.insert(toks.end(), prod_tokens[p].begin(), prod_tokens[p].end());
    const auto& ft = fam_tokens[family_of[p]];
    toks.insert(toks.end(), ft.begin(), ft.end());
    while (static_cast<int>(toks.size()) < spec.doc_text_len) {
      if (next_tok < spec.vocab_size) {
        // filler noise from the unused vocab tail
        std::uniform_int_distribution<int> tail(next_tok, spec.vocab_size - 1);
        toks.push_back(tail(rng));
      } else {
        toks.push_back(toks.front());
      }
    }
    if (static_cast<int>(toks.size()) > spec.doc_text_len) {
      toks.resize(static_cast<std::size_t>(spec.doc_text_len));
    }
    return toks;
  };

  std::vector<std::vector<int>> prod_docs(P), prod_queries(P);
  std::uniform_int_distribution<int> pick_any(0, P - 1);
  for (int p = 0; p < P; ++p) {
    for (int i = 0; i < docs_per[p]; ++i) {
      Sample s;
      s.id = next_id++;
      s.kind = SampleKind::kDoc;
      Eigen::VectorXd base = proto[p];
      int subject_block = 0;
      const int fam_lo = family_of[p] * spec.family_size;
      const int fam_hi = std::min(P, fam_lo + spec.family_size);
      if (spec.distractor_rate > 0.0 && fam_hi - fam_lo > 1 &&
          unif(rng) < spec.distractor_rate) {
        // sibling products fill all but one block of the feature vector: the
        // image shows several visually similar items and only the tokens say
        // which one is the subject
        const int blocks = spec.num_distractors + 1;
        const int len = spec.n_raw / blocks;
        std::uniform_int_distribution<int> pick_block(0, blocks - 1);
        std::uniform_int_distribution<int> pick_sib(fam_lo, fam_hi - 1);
        subject_block = pick_block(rng);
        for (int b = 0; b < blocks; ++b) {
          if (b == subject_block) continue;
          int q = p;
          while (q == p) q = pick_sib(rng);
          const int lo = b * len;
          const int w = b + 1 == blocks ? spec.n_raw - lo : len;
          base.segment(lo, w) = proto[q].segment(lo, w);
        }
      }
      s.raw = noisy(base, doc_noise);
      int token_p = p;
      if (spec.token_noise_rate > 0.0 && P > 1 &&
          unif(rng) < spec.token_noise_rate) {
        while (token_p == p) token_p = pick_any(rng);
      }
      s.tokens = make_tokens(token_p, subject_block);
      out.train.push_back(std::move(s));
      prod_docs[p].push_back(out.train.back().id);
      out.truth.sample_product[out.train.back().id] = p;
    }
    for (int i = 0; i < spec.queries_per_product; ++i) {
      Sample s;
      s.id = next_id++;
      s.kind = SampleKind::kQuery;
      s.raw = noisy(proto[p], spec.feature_noise);
      out.train.push_back(std::move(s));
      prod_queries[p].push_back(out.train.back().id);
      out.truth.sample_product[out.train.back().id] = p;
    }
    out.truth.product_family[p] = family_of[p];
  }

  // clicks: first query covers every doc, every query covers the first doc;
  // a noisy click is redirected to a doc of a random other product
  std::uniform_int_distribution<int> pick_prod(0, P - 1);
  auto emit_click = [&](int q, int p) {
    int target_p = p;
    if (P > 1 && unif(rng) < spec.click_noise_rate) {
      do {
        target_p = pick_prod(rng);
      } while (target_p == p);
    }
    const auto& docs = prod_docs[target_p];
    std::uniform_int_distribution<int> pick_doc(
        0, static_cast<int>(docs.size()) - 1);
    out.clicks.push_back({q, docs[pick_doc(rng)], true});
  };
  for (int p = 0; p < P; ++p) {
    if (prod_queries[p].empty()) continue;
    int q0 = prod_queries[p].front();
    for (int doc : prod_docs[p]) {
      if (P > 1 && unif(rng) < spec.click_noise_rate) {
        emit_click(q0, p);  // noisy replacement for this link
      } else {
        out.clicks.push_back({q0, doc, true});
      }
    }
    for (std::size_t qi = 1; qi < prod_queries[p].size(); ++qi) {
      emit_click(prod_queries[p][qi], p);
    }
  }

  for (int p = 0; p < P; ++p) {
    for (int i = 0; i < spec.test_queries_per_product; ++i) {
      Sample s;
      s.id = next_id++;
      s.kind = SampleKind::kQuery;
      s.raw = noisy(proto[p], spec.feature_noise);
      out.test_queries.push_back(std::move(s));
      out.truth.sample_product[out.test_queries.back().id] = p;
    }
  }
  return out;
}

std::vector<Sample> clip_samples_per_category(
    const std::vector<Sample>& samples, int max_per_category) {
  if (max_per_category < 1) {
    throw std::invalid_argument("clip: max_per_category >= 1");
  }
  std::vector<Sample> sorted = samples;
  std::sort(sorted.begin(), sorted.end(),
            [](const Sample& a, const Sample& b) { return a.id < b.id; });
  std::map<int, int> used;
  std::vector<Sample> out;
  for (const auto& s : sorted) {
    if (used[s.category]++ < max_per_category) out.push_back(s);
  }
  return out;
}

}  // namespace mixer

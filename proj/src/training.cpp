#include "mixer/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace mixer {

const std::set<std::string>& known_param_groups() {
  static const std::set<std::string> groups = {
      "backbone", "text", "fusion", "query_head", "doc_head", "proxy"};
  return groups;
}

Trainer::Trainer(MixerModel& model, ProxyStore& store, LossConfig loss_cfg,
                 double lr, std::uint64_t seed)
    : model_(model), store_(store), loss_cfg_(loss_cfg), lr_(lr), seed_(seed) {
  loss_cfg_.validate();
}

void Trainer::maybe_refresh_cache(bool force) {
  if (!loss_cfg_.knn_enabled) return;
  if (force || !cache_valid_ ||
      iteration_ - cache_.built_at_iter >= loss_cfg_.refresh_interval) {
    cache_ = refresh_cache(store_, loss_cfg_, iteration_);
    cache_valid_ = true;
  }
}

double Trainer::sgd_step(const TrainDataset& data, int batch_size,
                         const std::set<std::string>& frozen,
                         const std::string& phase_name) {
  if (data.samples.empty()) {
    throw std::invalid_argument("sgd_step: empty dataset");
  }
  for (const auto& g : frozen) {
    if (!known_param_groups().count(g)) {
      throw std::invalid_argument("sgd_step: unknown frozen group " + g);
    }
  }
  maybe_refresh_cache(false);

  // deterministic batch from (seed, iteration)
  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL *
                               static_cast<std::uint64_t>(iteration_ + 1)));
  std::uniform_int_distribution<std::size_t> pick(0, data.samples.size() - 1);
  std::vector<const Sample*> queries, docs;
  for (int i = 0; i < batch_size; ++i) {
    const Sample* s = &data.samples[pick(rng)];
    (s->kind == SampleKind::kQuery ? queries : docs).push_back(s);
  }
  // batch-norm needs >= 2 rows per side; drop a lone sample
  if (queries.size() == 1) queries.clear();
  if (docs.size() == 1) docs.clear();
  if (queries.empty() && docs.empty()) return 0.0;

  Tape tape;
  std::vector<Value> parts;
  std::vector<int> labels;
  const int n_raw = model_.config().n_raw;
  if (!queries.empty()) {
    Mat raw(static_cast<Eigen::Index>(queries.size()), n_raw);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      raw.row(static_cast<Eigen::Index>(i)) = queries[i]->raw.transpose();
      labels.push_back(queries[i]->category);
    }
    parts.push_back(model_.embed_queries(tape, raw, true));
  }
  if (!docs.empty()) {
    Mat raw(static_cast<Eigen::Index>(docs.size()), n_raw);
    std::vector<std::vector<int>> toks(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      raw.row(static_cast<Eigen::Index>(i)) = docs[i]->raw.transpose();
      toks[i] = docs[i]->tokens;
      labels.push_back(docs[i]->category);
    }
    parts.push_back(model_.embed_docs(tape, raw, toks, true));
  }
  Value z;
  if (parts.size() == 2) {
    std::vector<Value> rows;
    for (const auto& part : parts) {
      for (Eigen::Index i = 0; i < part->val.rows(); ++i) {
        rows.push_back(slice_row(tape, part, i));
      }
    }
    z = concat_rows(tape, rows);
  } else {
    z = parts.front();
  }

  store_.reset_counters();
  model_.params().zero_grads();
  Value loss = margin_loss(tape, z, labels, store_, loss_cfg_,
                           loss_cfg_.knn_enabled ? &cache_ : nullptr);
  tape.backward(loss);
  model_.params().sgd_step(lr_, frozen);
  store_.renormalize();
  ++iteration_;

  TrainLogEntry e;
  e.iter = iteration_;
  e.phase = phase_name;
  e.loss = loss->val(0, 0);
  e.dot_products = store_.total_dot_count();
  e.per_shard = store_.shard_dot_counts();
  double loss_val = e.loss;
  log_.push_back(std::move(e));
  return loss_val;
}

void Trainer::run_phase(const TrainDataset& data,
                        const CurriculumPhase& phase) {
  for (const auto& g : phase.frozen) {
    if (!known_param_groups().count(g)) {
      throw std::invalid_argument("run_phase: unknown frozen group " + g);
    }
  }
  if (data.num_categories > store_.num_categories()) {
    // new ids appearing in this phase get fresh random-unit proxies
    std::uint64_t grow_seed =
        seed_ ^ 0xabcdef1234567890ULL ^
        static_cast<std::uint64_t>(data.num_categories);
    store_.grow(grow_seed, data.num_categories);
  }
  maybe_refresh_cache(true);

  std::vector<double> recent;
  for (int it = 0; it < phase.iterations; ++it) {
    double loss =
        sgd_step(data, phase.batch_size, phase.frozen, phase.name);
    if (phase.plateau_window > 0) {
      recent.push_back(loss);
      if (static_cast<int>(recent.size()) > phase.plateau_window) {
        double old = recent[recent.size() - 1 - phase.plateau_window];
        double rel = old != 0.0 ? (old - loss) / std::abs(old) : 0.0;
        if (rel < phase.plateau_rel_improve) break;
      }
    }
  }
}

TrainDataset medium_subset(const TrainDataset& large, double medium_fraction) {
  if (medium_fraction <= 0.0 || medium_fraction > 1.0) {
    throw std::invalid_argument("medium_subset: fraction in (0,1]");
  }
  int cutoff = static_cast<int>(
      std::ceil(medium_fraction * static_cast<double>(large.num_categories)));
  cutoff = std::max(1, cutoff);
  TrainDataset out;
  out.num_categories = cutoff;
  for (const auto& s : large.samples) {
    if (s.category < cutoff) out.samples.push_back(s);
  }
  return out;
}

TrainDataset organize(std::vector<Sample> samples, const ClickLog& clicks,
                      const OrganizeOptions& opts, OrganizeReport* report) {
  CategoryAssignment assign = assign_initial_ids(samples);
  OrganizeReport rep;
  rep.initial_ids = static_cast<int>(densify_categories(assign).size());
  assign = merge_by_clicks(assign, clicks);
  rep.after_clicks = static_cast<int>(densify_categories(assign).size());
  if (opts.use_clustering) {
    auto feats = representative_features(samples, assign);
    assign = merge_by_clustering(assign, feats, opts.method, opts.params);
  }
  rep.after_clustering = static_cast<int>(densify_categories(assign).size());
  auto dense = densify_categories(assign);
  for (auto& s : samples) s.category = dense.at(assign.at(s.id));
  if (report) *report = rep;
  TrainDataset out;
  out.samples = std::move(samples);
  out.num_categories = static_cast<int>(dense.size());
  return out;
}

EmbeddingIndex build_doc_index(MixerModel& model,
                               const std::vector<Sample>& docs) {
  EmbeddingIndex index;
  const int n_raw = model.config().n_raw;
  Mat raw(static_cast<Eigen::Index>(docs.size()), n_raw);
  std::vector<std::vector<int>> toks(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    raw.row(static_cast<Eigen::Index>(i)) = docs[i].raw.transpose();
    toks[i] = docs[i].tokens;
    index.ids.push_back(docs[i].id);
  }
  Tape tape;
  index.emb = model.embed_docs(tape, raw, toks, false)->val;
  index.validate();
  return index;
}

std::map<int, RankedList> rank_all(MixerModel& model,
                                   const std::vector<Sample>& queries,
                                   const EmbeddingIndex& index) {
  const int n_raw = model.config().n_raw;
  Mat raw(static_cast<Eigen::Index>(queries.size()), n_raw);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    raw.row(static_cast<Eigen::Index>(i)) = queries[i].raw.transpose();
  }
  Tape tape;
  Mat emb = model.embed_queries(tape, raw, false)->val;
  std::map<int, RankedList> out;
  int depth = static_cast<int>(index.ids.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[queries[i].id] =
        search_topk(emb.row(static_cast<Eigen::Index>(i)), index, depth);
  }
  return out;
}

MetricsReport evaluate(MixerModel& model, const std::vector<Sample>& docs,
                       const std::vector<Sample>& queries,
                       const Judgments& judgments) {
  EmbeddingIndex index = build_doc_index(model, docs);
  auto results = rank_all(model, queries, index);
  return compute_metrics(results, judgments);
}

Judgments judgments_from_truth(const GroundTruth& truth,
                               const std::vector<Sample>& queries,
                               const std::vector<Sample>& docs) {
  Judgments out;
  for (const auto& q : queries) {
    int qp = truth.sample_product.at(q.id);
    int qf = truth.product_family.at(qp);
    Judgment j;
    for (const auto& d : docs) {
      if (d.kind != SampleKind::kDoc) continue;
      int dp = truth.sample_product.at(d.id);
      if (dp == qp) j.identical.push_back(d.id);
      if (truth.product_family.at(dp) == qf) j.relevant.push_back(d.id);
    }
    out[q.id] = std::move(j);
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t hash_param_groups(const ParamRegistry& reg,
                                const std::set<std::string>& groups) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, p] : reg.all()) {
    if (!groups.count(ParamRegistry::group_of(name))) continue;
    h = fnv1a(h, name.data(), name.size());
    for (Eigen::Index i = 0; i < p->val.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->val.cols(); ++j) {
        double v = p->val(i, j);
        h = fnv1a(h, &v, sizeof(v));
      }
    }
  }
  return h;
}

std::uint64_t hash_all_params(const ParamRegistry& reg) {
  return hash_param_groups(reg, known_param_groups());
}

}  // namespace mixer

#pragma once

#include "mixer/data_org.hpp"
#include "mixer/model.hpp"
#include "mixer/proxy_loss.hpp"
#include "mixer/retrieval_eval.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace mixer {

struct CurriculumPhase {
  std::string name;              // A | B | C
  std::string dataset;           // medium | large
  std::set<std::string> frozen;  // parameter group names
  int iterations = 0;
  int batch_size = 32;
  // optional early stop: relative loss improvement < plateau_rel_improve
  // over plateau_window iterations (0 disables)
  double plateau_rel_improve = 1e-3;
  int plateau_window = 0;
};

// Samples with dense category ids in [0, num_categories).
struct TrainDataset {
  std::vector<Sample> samples;
  int num_categories = 0;
};

struct TrainLogEntry {
  std::int64_t iter = 0;
  std::string phase;
  double loss = 0.0;
  std::int64_t dot_products = 0;
  std::vector<std::int64_t> per_shard;
};

// Known parameter groups, for freeze validation.
const std::set<std::string>& known_param_groups();

class Trainer {
 public:
  Trainer(MixerModel& model, ProxyStore& store, LossConfig loss_cfg,
          double lr, std::uint64_t seed);

  // One SGD step on a deterministic batch drawn from (seed, iteration).
  // Forward both sides, margin loss, backward, update unfrozen groups,
  // renormalize proxies. Throws leave parameters untouched.
  double sgd_step(const TrainDataset& data, int batch_size,
                  const std::set<std::string>& frozen,
                  const std::string& phase_name);

  // Runs one curriculum phase; grows the proxy store (random-unit new rows)
  // when the dataset introduces new categories.
  void run_phase(const TrainDataset& data, const CurriculumPhase& phase);

  std::int64_t iteration() const { return iteration_; }
  const std::vector<TrainLogEntry>& log() const { return log_; }
  const ProxySimCache& cache() const { return cache_; }
  MixerModel& model() { return model_; }
  ProxyStore& store() { return store_; }
  const LossConfig& loss_config() const { return loss_cfg_; }
  double learning_rate() const { return lr_; }
  void set_iteration(std::int64_t it) { iteration_ = it; }

 private:
  void maybe_refresh_cache(bool force);

  MixerModel& model_;
  ProxyStore& store_;
  LossConfig loss_cfg_;
  double lr_;
  std::uint64_t seed_;
  std::int64_t iteration_ = 0;
  ProxySimCache cache_;
  bool cache_valid_ = false;
  std::vector<TrainLogEntry> log_;
};

// Organized "medium" subset: samples whose dense category id is below
// ceil(medium_fraction * C).
TrainDataset medium_subset(const TrainDataset& large, double medium_fraction);

// Organizes raw samples: singleton ids -> click merge -> (optional)
// clustering merge -> dense category ids written into the samples.
struct OrganizeOptions {
  bool use_clustering = false;
  ClusterMethod method = ClusterMethod::kDensity;
  ClusterParams params;
};

struct OrganizeReport {
  int initial_ids = 0;
  int after_clicks = 0;
  int after_clustering = 0;
};

TrainDataset organize(std::vector<Sample> samples, const ClickLog& clicks,
                      const OrganizeOptions& opts,
                      OrganizeReport* report = nullptr);

// Inference-mode doc index and query embeddings; evaluates the paper metrics
// against the given judgments.
EmbeddingIndex build_doc_index(MixerModel& model,
                               const std::vector<Sample>& docs);
std::map<int, RankedList> rank_all(MixerModel& model,
                                   const std::vector<Sample>& queries,
                                   const EmbeddingIndex& index);
MetricsReport evaluate(MixerModel& model, const std::vector<Sample>& docs,
                       const std::vector<Sample>& queries,
                       const Judgments& judgments);

Judgments judgments_from_truth(const GroundTruth& truth,
                               const std::vector<Sample>& queries,
                               const std::vector<Sample>& docs);

// FNV-1a over the exact bytes of the named parameter groups.
std::uint64_t hash_param_groups(const ParamRegistry& reg,
                                const std::set<std::string>& groups);
std::uint64_t hash_all_params(const ParamRegistry& reg);

}  // namespace mixer

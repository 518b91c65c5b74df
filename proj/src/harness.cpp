#include "mixer/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mixer {

TrainRun make_train_run(const RunConfig& cfg, int initial_categories) {
  TrainRun run;
  run.model = std::make_unique<MixerModel>(cfg.model);
  run.store = std::make_unique<ProxyStore>(
      run.model->params(), initial_categories, cfg.model.d,
      cfg.loss.num_shards, cfg.seed ^ 0x70726f7879ULL);
  run.trainer = std::make_unique<Trainer>(*run.model, *run.store, cfg.loss,
                                          cfg.lr, cfg.seed);
  return run;
}

void run_curriculum(
    TrainRun& run, const RunConfig& cfg, const TrainDataset& large,
    const TrainDataset& medium,
    const std::function<void(const CurriculumPhase&, Trainer&)>& after_phase,
    const std::string& skip_through_phase) {
  bool skipping = !skip_through_phase.empty();
  for (const auto& phase : cfg.phases) {
    if (skipping) {
      if (phase.name == skip_through_phase) skipping = false;
      continue;
    }
    const TrainDataset& data = phase.dataset == "medium" ? medium : large;
    run.trainer->run_phase(data, phase);
    if (after_phase) after_phase(phase, *run.trainer);
  }
  if (skipping) {
    throw std::invalid_argument("run_curriculum: resume phase '" +
                                skip_through_phase + "' not in plan");
  }
}

PipelineResult run_pipeline(RunConfig cfg, Variant variant,
                            std::uint64_t run_seed, int clip_per_id) {
  cfg.model.variant = variant;
  cfg.seed += run_seed;
  cfg.synthetic.seed += run_seed;
  cfg.resolve();

  SyntheticData data = generate_synthetic(cfg.synthetic);
  PipelineResult result;
  TrainDataset large = organize(data.train, data.clicks, cfg.organize,
                                &result.organization);
  std::vector<Sample> docs;
  for (const auto& s : large.samples) {
    if (s.kind == SampleKind::kDoc) docs.push_back(s);
  }
  if (clip_per_id > 0) {
    large.samples = clip_samples_per_category(large.samples, clip_per_id);
  }
  TrainDataset medium = medium_subset(large, cfg.medium_fraction);

  TrainRun run = make_train_run(cfg, medium.num_categories);
  run_curriculum(run, cfg, large, medium);

  Judgments judgments =
      judgments_from_truth(data.truth, data.test_queries, docs);
  result.metrics =
      evaluate(*run.model, docs, data.test_queries, judgments);
  result.log = run.trainer->log();
  return result;
}

std::vector<AblationEntry> run_ablation(const RunConfig& cfg, int num_seeds) {
  if (num_seeds < 1) throw std::invalid_argument("run_ablation: num_seeds >= 1");
  std::vector<AblationEntry> out;
  for (Variant v : {Variant::kMixer, Variant::kMixerI, Variant::kMixerE}) {
    AblationEntry e;
    e.variant = to_string(v);
    for (int s = 0; s < num_seeds; ++s) {
      PipelineResult r =
          run_pipeline(cfg, v, static_cast<std::uint64_t>(s));
      e.identical_at_1.push_back(r.metrics.identical_at_1);
    }
    double sum = 0.0;
    for (double x : e.identical_at_1) sum += x;
    e.mean_identical_at_1 = sum / static_cast<double>(num_seeds);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mixer

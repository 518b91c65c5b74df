#pragma once

#include "mixer/config.hpp"
#include "mixer/training.hpp"

#include <functional>
#include <memory>
#include <string>

namespace mixer {

// Model + proxy store + trainer wired onto one parameter registry.
struct TrainRun {
  std::unique_ptr<MixerModel> model;
  std::unique_ptr<ProxyStore> store;
  std::unique_ptr<Trainer> trainer;
};

TrainRun make_train_run(const RunConfig& cfg, int initial_categories);

// Runs the configured phases over medium/large datasets. The optional
// callback fires after each phase (checkpointing hook).
void run_curriculum(
    TrainRun& run, const RunConfig& cfg, const TrainDataset& large,
    const TrainDataset& medium,
    const std::function<void(const CurriculumPhase&, Trainer&)>& after_phase =
        {},
    const std::string& skip_through_phase = "");

struct PipelineResult {
  MetricsReport metrics;
  OrganizeReport organization;
  std::vector<TrainLogEntry> log;
};

// Full experiment: generate -> organize -> curriculum -> evaluate held-out
// queries. run_seed offsets both the data and model seeds so repeated runs
// are independent but reproducible. clip_per_id > 0 limits training samples
// per category (the doc index is still built from all docs).
PipelineResult run_pipeline(RunConfig cfg, Variant variant,
                            std::uint64_t run_seed, int clip_per_id = 0);

struct AblationEntry {
  std::string variant;
  std::vector<double> identical_at_1;  // per seed
  double mean_identical_at_1 = 0.0;
};

std::vector<AblationEntry> run_ablation(const RunConfig& cfg, int num_seeds);

}  // namespace mixer

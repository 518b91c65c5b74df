#pragma once

#include "mixer/data_org.hpp"
#include "mixer/model.hpp"
#include "mixer/proxy_loss.hpp"
#include "mixer/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace mixer {

// One self-describing config per run; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  LossConfig loss;
  SyntheticSpec synthetic;
  OrganizeOptions organize;
  bool clustering_requested = false;
  double lr = 0.001;
  double medium_fraction = 0.25;
  std::vector<CurriculumPhase> phases;

  static RunConfig defaults();
  // Aligns model dims with the synthetic generator (n_raw, vocab, seed).
  void resolve();
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace mixer

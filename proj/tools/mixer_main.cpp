#include "mixer/config.hpp"
#include "mixer/gradcheck.hpp"
#include "mixer/harness.hpp"
#include "mixer/io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void echo_config(const mixer::RunConfig& cfg, const fs::path& out_dir) {
  std::ofstream out(out_dir / "config_resolved.json");
  if (!out) throw std::runtime_error("cannot write resolved config");
  out << cfg.to_json().dump(2) << "\n";
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  mixer::RunConfig cfg = mixer::RunConfig::load(config_path);
  fs::create_directories(out_dir);
  fs::path dir(out_dir);

  mixer::SyntheticData data = mixer::generate_synthetic(cfg.synthetic);
  mixer::OrganizeReport rep;
  mixer::TrainDataset organized =
      mixer::organize(data.train, data.clicks, cfg.organize, &rep);

  mixer::write_samples((dir / "samples.jsonl").string(), organized.samples);
  mixer::write_samples((dir / "test_queries.jsonl").string(),
                       data.test_queries);
  mixer::write_clicks((dir / "clicks.jsonl").string(), data.clicks);
  mixer::write_ground_truth((dir / "ground_truth.json").string(), data.truth);

  std::vector<mixer::Sample> docs;
  for (const auto& s : organized.samples) {
    if (s.kind == mixer::SampleKind::kDoc) docs.push_back(s);
  }
  mixer::Judgments judgments =
      mixer::judgments_from_truth(data.truth, data.test_queries, docs);
  mixer::write_judgments((dir / "judgments.jsonl").string(), judgments);

  json org{{"initial_ids", rep.initial_ids},
           {"after_click_merge", rep.after_clicks},
           {"after_cluster_merge", rep.after_clustering},
           {"final_categories", organized.num_categories},
           {"train_samples", organized.samples.size()},
           {"test_queries", data.test_queries.size()}};
  std::ofstream org_out(dir / "organization_report.json");
  org_out << org.dump(2) << "\n";
  echo_config(cfg, dir);
  std::cout << "wrote dataset with " << organized.num_categories
            << " categories to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_ckpt,
              const std::string& resume_after) {
  mixer::RunConfig cfg = mixer::RunConfig::load(config_path);
  fs::create_directories(out_dir);
  fs::path dir(out_dir), ddir(data_dir);

  mixer::TrainDataset large;
  large.samples = mixer::read_samples((ddir / "samples.jsonl").string());
  int max_cat = -1;
  for (const auto& s : large.samples) max_cat = std::max(max_cat, s.category);
  if (max_cat < 0) throw std::invalid_argument("train: dataset has no categories");
  large.num_categories = max_cat + 1;
  mixer::TrainDataset medium =
      mixer::medium_subset(large, cfg.medium_fraction);

  mixer::TrainRun run = mixer::make_train_run(cfg, medium.num_categories);
  if (!resume_ckpt.empty()) {
    auto cats = mixer::checkpoint_num_categories(resume_ckpt);
    if (static_cast<int>(cats) > run.store->num_categories()) {
      run.store->grow(cfg.seed ^ 0xabcdef1234567890ULL ^
                          static_cast<std::uint64_t>(cats),
                      static_cast<int>(cats));
    }
    std::int64_t it = mixer::load_checkpoint(resume_ckpt, *run.model);
    run.trainer->set_iteration(it);
  }

  auto after_phase = [&](const mixer::CurriculumPhase& phase,
                         mixer::Trainer& trainer) {
    mixer::save_checkpoint((dir / ("ckpt_" + phase.name + ".bin")).string(),
                           trainer.model(), trainer.iteration());
  };
  mixer::run_curriculum(run, cfg, large, medium, after_phase, resume_after);
  mixer::save_checkpoint((dir / "ckpt_final.bin").string(), *run.model,
                         run.trainer->iteration());
  mixer::write_train_log((dir / "train_log.jsonl").string(),
                         run.trainer->log());
  echo_config(cfg, dir);
  std::cout << "trained " << run.trainer->iteration() << " iterations, "
            << run.store->num_categories() << " categories\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_dir, const std::string& out_dir) {
  mixer::RunConfig cfg = mixer::RunConfig::load(config_path);
  fs::create_directories(out_dir);
  fs::path dir(out_dir), ddir(data_dir);

  mixer::MixerModel model(cfg.model);
  mixer::load_checkpoint(checkpoint, model);

  auto samples = mixer::read_samples((ddir / "samples.jsonl").string());
  std::vector<mixer::Sample> docs;
  for (const auto& s : samples) {
    if (s.kind == mixer::SampleKind::kDoc) docs.push_back(s);
  }
  auto queries = mixer::read_samples((ddir / "test_queries.jsonl").string());
  auto judgments = mixer::read_judgments((ddir / "judgments.jsonl").string());

  mixer::EmbeddingIndex index = mixer::build_doc_index(model, docs);
  auto results = mixer::rank_all(model, queries, index);
  // optional per-query candidate lists restrict the ranked pool
  for (auto& [qid, ranked] : results) {
    auto it = judgments.find(qid);
    if (it == judgments.end() || !it->second.candidates) continue;
    std::set<int> cand(it->second.candidates->begin(),
                       it->second.candidates->end());
    mixer::RankedList filtered;
    for (const auto& r : ranked) {
      if (cand.count(r.first)) filtered.push_back(r);
    }
    ranked = std::move(filtered);
  }
  mixer::MetricsReport rep = mixer::compute_metrics(results, judgments);
  mixer::write_metrics_report((dir / "metrics_report.json").string(), rep);
  echo_config(cfg, dir);
  std::cout << "identical_at_1=" << rep.identical_at_1
            << " identical_at_5=" << rep.identical_at_5
            << " relevance_at_1=" << rep.relevance_at_1 << " map=" << rep.map
            << " mrr=" << rep.mrr << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               int seeds) {
  mixer::RunConfig cfg = mixer::RunConfig::load(config_path);
  fs::create_directories(out_dir);
  auto entries = mixer::run_ablation(cfg, seeds);
  json j = json::array();
  for (const auto& e : entries) {
    j.push_back({{"variant", e.variant},
                 {"identical_at_1_per_seed", e.identical_at_1},
                 {"identical_at_1_mean", e.mean_identical_at_1}});
    std::cout << e.variant << ": mean identical_at_1 = "
              << e.mean_identical_at_1 << "\n";
  }
  std::ofstream out(fs::path(out_dir) / "ablation_report.json");
  out << j.dump(2) << "\n";
  echo_config(cfg, fs::path(out_dir));
  return 0;
}

int cmd_grad_check(bool corrupt) {
  auto results = mixer::run_grad_checks(1e-4, corrupt);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.group
              << " max_rel_err=" << r.max_rel_err << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixer: two-tower multi-modal retrieval trainer"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint;
  std::string resume_ckpt, resume_after;
  int seeds = 5;
  bool corrupt = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_dir)->required();

  auto* train = app.add_subcommand("train", "run the training curriculum");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_dir)->required();
  train->add_option("--resume", resume_ckpt,
                    "phase-boundary checkpoint to resume from");
  train->add_option("--resume-after", resume_after,
                    "name of the completed phase the checkpoint belongs to");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--out", out_dir)->required();

  auto* ablate = app.add_subcommand("ablate", "compare model variants");
  ablate->add_option("--config", config_path)->required();
  ablate->add_option("--out", out_dir)->required();
  ablate->add_option("--seeds", seeds);

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
  gc->add_flag("--corrupt", corrupt,
               "corrupt one analytic gradient (detector self-test)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (train->parsed()) {
      return cmd_train(config_path, data_dir, out_dir, resume_ckpt,
                       resume_after);
    }
    if (eval->parsed()) {
      return cmd_eval(config_path, checkpoint, data_dir, out_dir);
    }
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir, seeds);
    if (gc->parsed()) return cmd_grad_check(corrupt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

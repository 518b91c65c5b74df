#pragma once

#include "mixer/data_org.hpp"
#include "mixer/model.hpp"
#include "mixer/retrieval_eval.hpp"
#include "mixer/training.hpp"

#include <string>
#include <vector>

namespace mixer {

// Line-delimited JSON sample records {id, kind, raw, tokens, category}.
void write_samples(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_samples(const std::string& path);

// {q, d, clicked} records.
void write_clicks(const std::string& path, const ClickLog& clicks);
ClickLog read_clicks(const std::string& path);

void write_ground_truth(const std::string& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::string& path);

// {query_id, identical, relevant, candidates?} records.
void write_judgments(const std::string& path, const Judgments& judgments);
Judgments read_judgments(const std::string& path);

void write_metrics_report(const std::string& path, const MetricsReport& rep);

void write_train_log(const std::string& path,
                     const std::vector<TrainLogEntry>& log);

// Checkpoint: "MIXCKPT\1" magic, u32 version, dim table, then named blocks
// (name, shape, float64 little-endian payload). Round trip is bit-exact.
void save_checkpoint(const std::string& path, MixerModel& model,
                     std::int64_t iteration);
// Loads into an existing model; throws on any dimension mismatch.
std::int64_t load_checkpoint(const std::string& path, MixerModel& model);

// Header-only peek at the proxy row count stored in a checkpoint.
std::uint32_t checkpoint_num_categories(const std::string& path);

}  // namespace mixer

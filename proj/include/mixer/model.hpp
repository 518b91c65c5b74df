#pragma once

#include "mixer/fusion.hpp"
#include "mixer/layers.hpp"

#include <vector>

namespace mixer {

enum class Variant { kMixer, kMixerI, kMixerE };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  int n_raw = 64;      // raw input feature dimension
  int hidden = 32;     // backbone hidden width
  int h2 = 4;          // spatial positions in the feature grid
  int n = 16;          // channels per position
  int d = 32;          // common embedding dimension
  int e = 4;           // external memory slots
  int vocab = 256;     // token table rows
  int max_text_len = 20;
  Variant variant = Variant::kMixer;
  std::uint64_t seed = 0;
};

// Two-tower model: shared image backbone, text encoder, concept-aware fusion
// on the doc side, separate query/doc transformation heads.
class MixerModel {
 public:
  explicit MixerModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& params() { return reg_; }
  const ParamRegistry& params() const { return reg_; }

  // Shared backbone: b x n_raw -> b x (h2*n) feature grids, flattened.
  Value encode_image(Tape& t, const Value& raw) const;
  // Token list -> 1 x d text feature (mean of table rows, then projection).
  Value encode_text(Tape& t, const std::vector<int>& tokens) const;
  // Transformation head only (no normalization): FC -> BN -> relu -> FC.
  Value transform_query(Tape& t, const Value& x, bool training);
  Value transform_doc(Tape& t, const Value& x, bool training);

  // b x n_raw raw query images -> b x d unit-norm embeddings.
  Value embed_queries(Tape& t, const Mat& raw, bool training);
  // Doc samples (image + tokens) -> b x d unit-norm embeddings, routed per
  // the model variant (full fusion / image-only / naive averaging).
  Value embed_docs(Tape& t, const Mat& raw,
                   const std::vector<std::vector<int>>& tokens, bool training);

  const ConceptMemory& concept_memory() const { return mem_; }
  const FusionParams& fusion_params() const { return fp_; }

  // Running BN statistics live outside the registry; expose them for
  // checkpointing.
  std::vector<std::pair<std::string, Mat*>> state_blocks();

 private:
  Value pooled_image(Tape& t, const Value& raw) const;

  ModelConfig cfg_;
  ParamRegistry reg_;
  Linear backbone1_, backbone2_;
  Value text_table_;
  Linear text_proj_;
  ConceptMemory mem_;
  FusionParams fp_;
  Linear img_proj_;  // Mixer-E: pooled image (n) -> d before averaging
  LinearBN query_head1_;
  Linear query_head2_;
  LinearBN doc_head1_;
  Linear doc_head2_;
};

}  // namespace mixer

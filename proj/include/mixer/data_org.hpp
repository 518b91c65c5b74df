#pragma once

#include "mixer/autodiff.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mixer {

enum class SampleKind { kQuery, kDoc };

struct Sample {
  int id = 0;
  SampleKind kind = SampleKind::kQuery;
  Eigen::VectorXd raw;      // n_raw features
  std::vector<int> tokens;  // empty for queries
  int category = -1;        // assigned during organization
};

struct ClickRecord {
  int query_id = 0;
  int doc_id = 0;
  bool clicked = false;
};

using ClickLog = std::vector<ClickRecord>;

// sample id -> category id; canonical category id = smallest member sample id
using CategoryAssignment = std::map<int, int>;

struct GroundTruth {
  std::map<int, int> sample_product;   // sample id -> latent product
  std::map<int, int> product_family;   // product -> relevance family
};

struct SyntheticSpec {
  int num_products = 200;
  double exposure_exponent = 1.2;  // power-law skew over products
  int min_docs_per_product = 2;
  int max_docs_per_product = 60;
  int avg_docs_per_product = 20;
  int queries_per_product = 4;       // training queries
  int test_queries_per_product = 2;  // held out, not clicked
  double click_noise_rate = 0.0;     // probability a click crosses products
  int family_size = 4;               // products per relevance family
  int vocab_size = 1024;
  int tokens_per_product = 3;  // product-specific vocabulary
  int tokens_per_family = 2;   // shared within a relevance family
  int doc_text_len = 6;
  int n_raw = 64;
  double feature_noise = 0.1;        // sample noise around the prototype
  double doc_feature_noise = -1.0;   // doc-side override; < 0 uses
                                     // feature_noise. Raising it above
                                     // image_distinct_scale makes doc images
                                     // unreliable so their tokens carry the
                                     // product identity
  double image_distinct_scale = 1.0; // product offset from family prototype;
                                     // small values make products visually
                                     // ambiguous and text-dependent
  double distractor_rate = 0.0;      // probability a doc image also shows a
                                     // same-family sibling: the sibling's
                                     // prototype replaces all but one feature
                                     // block, so only the tokens say which
                                     // object is the subject
  int num_distractors = 1;           // clutter objects per distractor doc
  double token_noise_rate = 0.0;     // probability a doc carries the tokens of
                                     // a random other product (noisy titles)
  bool subject_position_token = false;  // prepend a token naming the feature
                                        // block that holds the subject; the
                                        // token says where the subject is, not
                                        // what it is
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::vector<Sample> train;
  std::vector<Sample> test_queries;
  ClickLog clicks;
  GroundTruth truth;
};

// Every sample becomes its own singleton category.
CategoryAssignment assign_initial_ids(const std::vector<Sample>& samples);

// Union-find over clicked (query, doc) pairs; unclicked records are ignored.
CategoryAssignment merge_by_clicks(const CategoryAssignment& assignment,
                                   const ClickLog& clicks);

// Mean raw feature per current category id.
std::map<int, Eigen::VectorXd> representative_features(
    const std::vector<Sample>& samples, const CategoryAssignment& assignment);

enum class ClusterMethod { kKMeans, kDensity };

struct ClusterParams {
  int k = 0;               // kmeans centers
  int kmeans_iters = 50;
  double eps = 0.0;        // density radius; <= 0 selects the 5th-percentile
                           // pairwise distance
  int min_points = 2;
  std::uint64_t seed = 0;
};

// Categories whose representatives land in the same cluster are merged.
CategoryAssignment merge_by_clustering(
    const CategoryAssignment& assignment,
    const std::map<int, Eigen::VectorXd>& features, ClusterMethod method,
    const ClusterParams& params);

// Canonical category ids -> dense [0, C) ids, ascending canonical order.
std::map<int, int> densify_categories(const CategoryAssignment& assignment);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Keeps at most `max_per_category` training samples per category (ascending
// sample id); used for the samples-per-ID study.
std::vector<Sample> clip_samples_per_category(const std::vector<Sample>& samples,
                                              int max_per_category);

}  // namespace mixer

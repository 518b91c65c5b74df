#include "mixer/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <stdexcept>

namespace mixer {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + where + " must be an object");
  }
  for (const auto& [key, val] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  where);
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.loss.knn_enabled = true;
  CurriculumPhase a{"A", "medium", {}, 400, 32};
  CurriculumPhase b{"B",
                    "large",
                    {"backbone", "text", "fusion", "query_head", "doc_head"},
                    200,
                    32};
  CurriculumPhase cc{"C", "large", {}, 600, 32};
  c.phases = {a, b, cc};
  return c;
}

void RunConfig::resolve() {
  // model dims must agree with the generator
  model.n_raw = synthetic.n_raw;
  model.vocab = std::max(model.vocab, synthetic.vocab_size);
  model.seed = seed;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c = defaults();
  check_keys(j, "root",
             {"seed", "model", "loss", "synthetic", "organize", "train"});
  maybe(j, "seed", c.seed);
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"d", "e", "h2", "n", "n_raw", "hidden", "vocab",
                "max_text_len", "variant"});
    maybe(m, "d", c.model.d);
    maybe(m, "e", c.model.e);
    maybe(m, "h2", c.model.h2);
    maybe(m, "n", c.model.n);
    maybe(m, "n_raw", c.model.n_raw);
    maybe(m, "hidden", c.model.hidden);
    maybe(m, "vocab", c.model.vocab);
    maybe(m, "max_text_len", c.model.max_text_len);
    if (m.contains("variant")) {
      c.model.variant = variant_from_string(m.at("variant").get<std::string>());
    }
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss",
               {"s", "m", "knn_fraction", "refresh_interval", "knn_enabled",
                "num_shards"});
    maybe(l, "s", c.loss.s);
    maybe(l, "m", c.loss.m);
    maybe(l, "knn_fraction", c.loss.knn_fraction);
    maybe(l, "refresh_interval", c.loss.refresh_interval);
    maybe(l, "knn_enabled", c.loss.knn_enabled);
    maybe(l, "num_shards", c.loss.num_shards);
    c.loss.validate();
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    check_keys(s, "synthetic",
               {"num_products", "exposure_exponent", "min_docs_per_product",
                "max_docs_per_product", "avg_docs_per_product",
                "queries_per_product", "test_queries_per_product",
                "click_noise_rate", "family_size", "vocab_size",
                "tokens_per_product", "tokens_per_family", "doc_text_len",
                "n_raw", "feature_noise", "doc_feature_noise",
                "image_distinct_scale", "distractor_rate", "num_distractors",
                "token_noise_rate", "subject_position_token", "seed"});
    maybe(s, "num_products", c.synthetic.num_products);
    maybe(s, "exposure_exponent", c.synthetic.exposure_exponent);
    maybe(s, "min_docs_per_product", c.synthetic.min_docs_per_product);
    maybe(s, "max_docs_per_product", c.synthetic.max_docs_per_product);
    maybe(s, "avg_docs_per_product", c.synthetic.avg_docs_per_product);
    maybe(s, "queries_per_product", c.synthetic.queries_per_product);
    maybe(s, "test_queries_per_product", c.synthetic.test_queries_per_product);
    maybe(s, "click_noise_rate", c.synthetic.click_noise_rate);
    maybe(s, "family_size", c.synthetic.family_size);
    maybe(s, "vocab_size", c.synthetic.vocab_size);
    maybe(s, "tokens_per_product", c.synthetic.tokens_per_product);
    maybe(s, "tokens_per_family", c.synthetic.tokens_per_family);
    maybe(s, "doc_text_len", c.synthetic.doc_text_len);
    maybe(s, "n_raw", c.synthetic.n_raw);
    maybe(s, "feature_noise", c.synthetic.feature_noise);
    maybe(s, "doc_feature_noise", c.synthetic.doc_feature_noise);
    maybe(s, "image_distinct_scale", c.synthetic.image_distinct_scale);
    maybe(s, "distractor_rate", c.synthetic.distractor_rate);
    maybe(s, "num_distractors", c.synthetic.num_distractors);
    maybe(s, "token_noise_rate", c.synthetic.token_noise_rate);
    maybe(s, "subject_position_token", c.synthetic.subject_position_token);
    maybe(s, "seed", c.synthetic.seed);
    c.synthetic.validate();
  }
  if (j.contains("organize")) {
    const json& o = j.at("organize");
    check_keys(o, "organize",
               {"use_clustering", "method", "eps", "min_points", "kmeans_k",
                "kmeans_iters"});
    maybe(o, "use_clustering", c.organize.use_clustering);
    if (o.contains("method")) {
      std::string m = o.at("method").get<std::string>();
      if (m == "kmeans") c.organize.method = ClusterMethod::kKMeans;
      else if (m == "density") c.organize.method = ClusterMethod::kDensity;
      else throw std::invalid_argument("config: unknown cluster method " + m);
    }
    maybe(o, "eps", c.organize.params.eps);
    maybe(o, "min_points", c.organize.params.min_points);
    maybe(o, "kmeans_k", c.organize.params.k);
    maybe(o, "kmeans_iters", c.organize.params.kmeans_iters);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"lr", "medium_fraction", "phases"});
    maybe(t, "lr", c.lr);
    maybe(t, "medium_fraction", c.medium_fraction);
    if (t.contains("phases")) {
      c.phases.clear();
      for (const json& p : t.at("phases")) {
        check_keys(p, "phase",
                   {"name", "dataset", "frozen", "iterations", "batch_size",
                    "plateau_rel_improve", "plateau_window"});
        CurriculumPhase ph;
        ph.name = p.at("name").get<std::string>();
        ph.dataset = p.at("dataset").get<std::string>();
        if (ph.dataset != "medium" && ph.dataset != "large") {
          throw std::invalid_argument("config: phase dataset must be medium|large");
        }
        if (p.contains("frozen")) {
          for (const json& g : p.at("frozen")) {
            std::string name = g.get<std::string>();
            if (!known_param_groups().count(name)) {
              throw std::invalid_argument("config: unknown frozen group " + name);
            }
            ph.frozen.insert(name);
          }
        }
        maybe(p, "iterations", ph.iterations);
        maybe(p, "batch_size", ph.batch_size);
        maybe(p, "plateau_rel_improve", ph.plateau_rel_improve);
        maybe(p, "plateau_window", ph.plateau_window);
        c.phases.push_back(std::move(ph));
      }
    }
  }
  c.resolve();
  c.clustering_requested = c.organize.use_clustering;
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["model"] = {{"d", model.d},
                {"e", model.e},
                {"h2", model.h2},
                {"n", model.n},
                {"n_raw", model.n_raw},
                {"hidden", model.hidden},
                {"vocab", model.vocab},
                {"max_text_len", model.max_text_len},
                {"variant", to_string(model.variant)}};
  j["loss"] = {{"s", loss.s},
               {"m", loss.m},
               {"knn_fraction", loss.knn_fraction},
               {"refresh_interval", loss.refresh_interval},
               {"knn_enabled", loss.knn_enabled},
               {"num_shards", loss.num_shards}};
  j["synthetic"] = {
      {"num_products", synthetic.num_products},
      {"exposure_exponent", synthetic.exposure_exponent},
      {"min_docs_per_product", synthetic.min_docs_per_product},
      {"max_docs_per_product", synthetic.max_docs_per_product},
      {"avg_docs_per_product", synthetic.avg_docs_per_product},
      {"queries_per_product", synthetic.queries_per_product},
      {"test_queries_per_product", synthetic.test_queries_per_product},
      {"click_noise_rate", synthetic.click_noise_rate},
      {"family_size", synthetic.family_size},
      {"vocab_size", synthetic.vocab_size},
      {"tokens_per_product", synthetic.tokens_per_product},
      {"tokens_per_family", synthetic.tokens_per_family},
      {"doc_text_len", synthetic.doc_text_len},
      {"n_raw", synthetic.n_raw},
      {"feature_noise", synthetic.feature_noise},
      {"doc_feature_noise", synthetic.doc_feature_noise},
      {"image_distinct_scale", synthetic.image_distinct_scale},
      {"distractor_rate", synthetic.distractor_rate},
      {"num_distractors", synthetic.num_distractors},
      {"token_noise_rate", synthetic.token_noise_rate},
      {"subject_position_token", synthetic.subject_position_token},
      {"seed", synthetic.seed}};
  j["organize"] = {
      {"use_clustering", organize.use_clustering},
      {"method",
       organize.method == ClusterMethod::kKMeans ? "kmeans" : "density"},
      {"eps", organize.params.eps},
      {"min_points", organize.params.min_points},
      {"kmeans_k", organize.params.k},
      {"kmeans_iters", organize.params.kmeans_iters}};
  json phases = json::array();
  for (const auto& p : this->phases) {
    phases.push_back({{"name", p.name},
                      {"dataset", p.dataset},
                      {"frozen", std::vector<std::string>(p.frozen.begin(),
                                                          p.frozen.end())},
                      {"iterations", p.iterations},
                      {"batch_size", p.batch_size},
                      {"plateau_rel_improve", p.plateau_rel_improve},
                      {"plateau_window", p.plateau_window}});
  }
  j["train"] = {{"lr", lr},
                {"medium_fraction", medium_fraction},
                {"phases", phases}};
  return j;
}

}  // namespace mixer

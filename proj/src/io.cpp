#include "mixer/io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mixer {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  return in;
}

}  // namespace

void write_samples(const std::string& path,
                   const std::vector<Sample>& samples) {
  auto out = open_out(path);
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["kind"] = s.kind == SampleKind::kQuery ? "query" : "doc";
    j["raw"] = std::vector<double>(s.raw.data(), s.raw.data() + s.raw.size());
    j["tokens"] = s.tokens;
    j["category"] = s.category;
    out << j.dump() << "\n";
  }
}

std::vector<Sample> read_samples(const std::string& path) {
  auto in = open_in(path);
  std::vector<Sample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Sample s;
    s.id = j.at("id").get<int>();
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "query") s.kind = SampleKind::kQuery;
    else if (kind == "doc") s.kind = SampleKind::kDoc;
    else throw std::invalid_argument("bad sample kind: " + kind);
    auto raw = j.at("raw").get<std::vector<double>>();
    s.raw = Eigen::Map<const Eigen::VectorXd>(raw.data(),
                                              static_cast<Eigen::Index>(raw.size()));
    s.tokens = j.at("tokens").get<std::vector<int>>();
    s.category = j.at("category").get<int>();
    if (s.kind == SampleKind::kQuery && !s.tokens.empty()) {
      throw std::invalid_argument("query sample with tokens: id " +
                                  std::to_string(s.id));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_clicks(const std::string& path, const ClickLog& clicks) {
  auto out = open_out(path);
  for (const auto& c : clicks) {
    json j{{"q", c.query_id}, {"d", c.doc_id}, {"clicked", c.clicked}};
    out << j.dump() << "\n";
  }
}

ClickLog read_clicks(const std::string& path) {
  auto in = open_in(path);
  ClickLog out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    out.push_back({j.at("q").get<int>(), j.at("d").get<int>(),
                   j.at("clicked").get<bool>()});
  }
  return out;
}

void write_ground_truth(const std::string& path, const GroundTruth& truth) {
  json sp = json::object(), pf = json::object();
  for (const auto& [s, p] : truth.sample_product) sp[std::to_string(s)] = p;
  for (const auto& [p, f] : truth.product_family) pf[std::to_string(p)] = f;
  json j{{"sample_product", sp}, {"product_family", pf}};
  open_out(path) << j.dump(2) << "\n";
}

GroundTruth read_ground_truth(const std::string& path) {
  auto in = open_in(path);
  json j;
  in >> j;
  GroundTruth out;
  for (const auto& [k, v] : j.at("sample_product").items()) {
    out.sample_product[std::stoi(k)] = v.get<int>();
  }
  for (const auto& [k, v] : j.at("product_family").items()) {
    out.product_family[std::stoi(k)] = v.get<int>();
  }
  return out;
}

void write_judgments(const std::string& path, const Judgments& judgments) {
  auto out = open_out(path);
  for (const auto& [qid, j] : judgments) {
    json rec{{"query_id", qid},
             {"identical", j.identical},
             {"relevant", j.relevant}};
    if (j.candidates) rec["candidates"] = *j.candidates;
    out << rec.dump() << "\n";
  }
}

Judgments read_judgments(const std::string& path) {
  auto in = open_in(path);
  Judgments out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Judgment j;
    j.identical = rec.at("identical").get<std::vector<int>>();
    j.relevant = rec.at("relevant").get<std::vector<int>>();
    if (rec.contains("candidates")) {
      j.candidates = rec.at("candidates").get<std::vector<int>>();
    }
    out[rec.at("query_id").get<int>()] = std::move(j);
  }
  return out;
}

void write_metrics_report(const std::string& path, const MetricsReport& rep) {
  json j{{"identical_at_1", rep.identical_at_1},
         {"identical_at_5", rep.identical_at_5},
         {"relevance_at_1", rep.relevance_at_1},
         {"map", rep.map},
         {"mrr", rep.mrr},
         {"queries", rep.queries},
         {"map_excluded", rep.map_excluded}};
  open_out(path) << j.dump(2) << "\n";
}

void write_train_log(const std::string& path,
                     const std::vector<TrainLogEntry>& log) {
  auto out = open_out(path);
  for (const auto& e : log) {
    json j{{"iter", e.iter},
           {"phase", e.phase},
           {"loss", e.loss},
           {"dot_products", e.dot_products},
           {"per_shard", e.per_shard}};
    out << j.dump() << "\n";
  }
}

namespace {

constexpr char kMagic[8] = {'M', 'I', 'X', 'C', 'K', 'P', 'T', '\1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t get_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void put_block(std::ofstream& out, const std::string& name, const Mat& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, 2);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, MixerModel& model,
                     std::int64_t iteration) {
  auto out = open_out(path, true);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, 1);  // format version
  const ModelConfig& c = model.config();
  std::uint32_t num_cats = 0;
  if (model.params().has("proxy.w")) {
    num_cats =
        static_cast<std::uint32_t>(model.params().get("proxy.w")->val.rows());
  }
  for (std::uint32_t v :
       {static_cast<std::uint32_t>(c.d), static_cast<std::uint32_t>(c.e),
        static_cast<std::uint32_t>(c.h2), static_cast<std::uint32_t>(c.n),
        static_cast<std::uint32_t>(c.n_raw),
        static_cast<std::uint32_t>(c.hidden),
        static_cast<std::uint32_t>(c.vocab),
        static_cast<std::uint32_t>(c.variant), num_cats}) {
    put_u32(out, v);
  }
  put_u64(out, static_cast<std::uint64_t>(iteration));

  auto state = model.state_blocks();
  put_u32(out, static_cast<std::uint32_t>(model.params().all().size() +
                                          state.size()));
  for (const auto& [name, p] : model.params().all()) {
    put_block(out, name, p->val);
  }
  for (const auto& [name, m] : state) {
    put_block(out, "state." + name, *m);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::uint32_t checkpoint_num_categories(const std::string& path) {
  auto in = open_in(path, true);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  get_u32(in);  // version
  std::uint32_t dims[9];
  for (auto& d : dims) d = get_u32(in);
  return dims[8];
}

std::int64_t load_checkpoint(const std::string& path, MixerModel& model) {
  auto in = open_in(path, true);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  std::uint32_t version = get_u32(in);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  const ModelConfig& c = model.config();
  std::uint32_t dims[9];
  for (auto& d : dims) d = get_u32(in);
  std::uint32_t expect[8] = {
      static_cast<std::uint32_t>(c.d), static_cast<std::uint32_t>(c.e),
      static_cast<std::uint32_t>(c.h2), static_cast<std::uint32_t>(c.n),
      static_cast<std::uint32_t>(c.n_raw), static_cast<std::uint32_t>(c.hidden),
      static_cast<std::uint32_t>(c.vocab), static_cast<std::uint32_t>(c.variant)};
  for (int i = 0; i < 8; ++i) {
    if (dims[i] != expect[i]) {
      throw std::runtime_error("checkpoint dimension table mismatch");
    }
  }
  auto iteration = static_cast<std::int64_t>(get_u64(in));

  std::map<std::string, Mat*> state;
  for (auto& [name, m] : model.state_blocks()) state["state." + name] = m;

  std::uint32_t nblocks = get_u32(in);
  for (std::uint32_t b = 0; b < nblocks; ++b) {
    std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t ndim = get_u32(in);
    if (ndim != 2) throw std::runtime_error("checkpoint: bad block rank");
    auto rows = static_cast<Eigen::Index>(get_u64(in));
    auto cols = static_cast<Eigen::Index>(get_u64(in));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(i, j) = v;
      }
    }
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    if (auto it = state.find(name); it != state.end()) {
      if (it->second->rows() != rows || it->second->cols() != cols) {
        throw std::runtime_error("checkpoint: state shape mismatch for " + name);
      }
      *it->second = m;
    } else if (model.params().has(name)) {
      Value p = model.params().get(name);
      if (p->val.rows() != rows || p->val.cols() != cols) {
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      }
      p->val = m;
    } else if (name == "proxy.w") {
      // evaluating without a proxy store; proxies are training-only
      continue;
    } else {
      throw std::runtime_error("checkpoint: unknown block " + name);
    }
  }
  return iteration;
}

}  // namespace mixer

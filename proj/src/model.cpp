#include "mixer/model.hpp"

#include <stdexcept>

namespace mixer {

Variant variant_from_string(const std::string& s) {
  if (s == "mixer") return Variant::kMixer;
  if (s == "mixer-i") return Variant::kMixerI;
  if (s == "mixer-e") return Variant::kMixerE;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kMixer: return "mixer";
    case Variant::kMixerI: return "mixer-i";
    case Variant::kMixerE: return "mixer-e";
  }
  return "?";
}

MixerModel::MixerModel(const ModelConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng(cfg.seed);
  backbone1_ = Linear(reg_, "backbone.l1", cfg.n_raw, cfg.hidden, rng);
  backbone2_ = Linear(reg_, "backbone.l2", cfg.hidden, cfg.h2 * cfg.n, rng);
  text_table_ = reg_.add("text.table",
                         init_uniform(rng, cfg.vocab, cfg.d, cfg.d));
  text_proj_ = Linear(reg_, "text.proj", cfg.d, cfg.d, rng);
  // fan-in init leaves both attention softmaxes nearly uniform (logit spread
  // ~0.03 at d=32), which starves the text pathway of gradient; unit-bound
  // memories start the concept attention at order-one logit spread instead
  mem_.m_k = reg_.add("fusion.m_k", init_uniform(rng, cfg.e, cfg.d, 1));
  mem_.m_v = reg_.add("fusion.m_v", init_uniform(rng, cfg.d, cfg.e, 1));
  fp_.f_k = Linear(reg_, "fusion.f_k", cfg.n, cfg.d, rng);
  // same reasoning as the memories: boost the key map so softmax(K_I c)
  // starts selective rather than uniform
  fp_.f_k.w->val *= 4.0;
  fp_.f_k.b->val *= 4.0;
  fp_.f_v = Linear(reg_, "fusion.f_v", cfg.n, cfg.d, rng);
  img_proj_ = Linear(reg_, "fusion.img_proj", cfg.n, cfg.d, rng);
  query_head1_ = LinearBN(reg_, "query_head.l1", cfg.n, cfg.d, rng);
  query_head2_ = Linear(reg_, "query_head.l2", cfg.d, cfg.d, rng);
  // Doc head input: fused vector (d) for mixer/mixer-e, pooled image (n)
  // for mixer-i.
  int doc_in = cfg.variant == Variant::kMixerI ? cfg.n : cfg.d;
  doc_head1_ = LinearBN(reg_, "doc_head.l1", doc_in, cfg.d, rng);
  doc_head2_ = Linear(reg_, "doc_head.l2", cfg.d, cfg.d, rng);
}

Value MixerModel::encode_image(Tape& t, const Value& raw) const {
  if (raw->val.cols() != cfg_.n_raw) {
    throw std::invalid_argument("encode_image: expected " +
                                std::to_string(cfg_.n_raw) + " columns, got " +
                                std::to_string(raw->val.cols()));
  }
  Value h = relu(t, backbone1_.forward(t, raw));
  return backbone2_.forward(t, h);
}

Value MixerModel::encode_text(Tape& t, const std::vector<int>& tokens) const {
  if (tokens.empty()) {
    throw std::invalid_argument("encode_text: empty token list");
  }
  if (static_cast<int>(tokens.size()) > cfg_.max_text_len) {
    throw std::invalid_argument("encode_text: token list exceeds max length " +
                                std::to_string(cfg_.max_text_len));
  }
  Value mean = gather_mean(t, text_table_, tokens);
  return text_proj_.forward(t, mean);
}

Value MixerModel::pooled_image(Tape& t, const Value& raw) const {
  return pool_groups(t, encode_image(t, raw), cfg_.h2, cfg_.n);
}

Value MixerModel::transform_query(Tape& t, const Value& x, bool training) {
  return query_head2_.forward(t, relu(t, query_head1_.forward(t, x, training)));
}

Value MixerModel::transform_doc(Tape& t, const Value& x, bool training) {
  return doc_head2_.forward(t, relu(t, doc_head1_.forward(t, x, training)));
}

Value MixerModel::embed_queries(Tape& t, const Mat& raw, bool training) {
  Value pooled = pooled_image(t, make_constant(raw));
  return l2_normalize_rows(t, transform_query(t, pooled, training));
}

Value MixerModel::embed_docs(Tape& t, const Mat& raw,
                             const std::vector<std::vector<int>>& tokens,
                             bool training) {
  if (raw.rows() != static_cast<Eigen::Index>(tokens.size())) {
    throw std::invalid_argument("embed_docs: raw/tokens count mismatch");
  }
  Value raw_v = make_constant(raw);
  if (cfg_.variant == Variant::kMixerI) {
    Value pooled = pooled_image(t, raw_v);
    return l2_normalize_rows(t, transform_doc(t, pooled, training));
  }
  if (cfg_.variant == Variant::kMixerE) {
    // "simply averaging the image and text embedding": each modality is
    // transformed on its own and the average is taken at the very end
    Value pooled = pooled_image(t, raw_v);
    Value img_d = img_proj_.forward(t, pooled);  // b x d
    std::vector<Value> rows;
    rows.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      rows.push_back(encode_text(t, tokens[i]));
    }
    Value txt = concat_rows(t, rows);
    Value avg = average_fuse(t, transform_doc(t, img_d, training), txt);
    return l2_normalize_rows(t, avg);
  }
  // full concept-aware fusion
  Value grids = encode_image(t, raw_v);  // b x (h2*n)
  std::vector<Value> fused_rows;
  fused_rows.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Value grid = reshape_row(t, slice_row(t, grids, static_cast<Eigen::Index>(i)),
                             cfg_.h2, cfg_.n);
    Value txt = encode_text(t, tokens[i]);
    ConceptResult cr = extract_concept(t, txt, mem_);
    FuseResult fr = fuse(t, grid, cr.concept_vec, fp_);
    fused_rows.push_back(fr.fused);
  }
  Value fused = concat_rows(t, fused_rows);  // b x d
  return l2_normalize_rows(t, transform_doc(t, fused, training));
}

std::vector<std::pair<std::string, Mat*>> MixerModel::state_blocks() {
  return {
      {"query_head.l1.bn_rmean", &query_head1_.running_mean},
      {"query_head.l1.bn_rvar", &query_head1_.running_var},
      {"doc_head.l1.bn_rmean", &doc_head1_.running_mean},
      {"doc_head.l1.bn_rvar", &doc_head1_.running_var},
  };
}

}  // namespace mixer

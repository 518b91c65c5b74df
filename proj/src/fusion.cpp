#include "mixer/fusion.hpp"

#include <stdexcept>

namespace mixer {

ConceptResult extract_concept(Tape& t, const Value& text,
                              const ConceptMemory& mem) {
  if (text->val.rows() != 1 || text->val.cols() != mem.m_k->val.cols()) {
    throw std::invalid_argument("extract_concept: text dim != memory dim");
  }
  // logits = t M_k^T  (row form of M_k t)
  Value logits = matmul(t, text, transpose(t, mem.m_k));
  Value attn = rowwise_softmax(t, logits);
  // c = M_v attn  ->  row form: attn M_v^T
  Value concept_vec = matmul(t, attn, transpose(t, mem.m_v));
  return {attn, concept_vec};
}

FuseResult fuse(Tape& t, const Value& grid, const Value& concept_vec,
                const FusionParams& fp) {
  if (grid->val.cols() != fp.f_k.w->val.rows()) {
    throw std::invalid_argument("fuse: grid channels != F_K input dim");
  }
  if (concept_vec->val.rows() != 1 ||
      concept_vec->val.cols() != fp.f_k.w->val.cols()) {
    throw std::invalid_argument("fuse: concept_vec dim != F_K output dim");
  }
  Value keys = fp.f_k.forward(t, grid);    // h2 x d
  Value vals = fp.f_v.forward(t, grid);    // h2 x d
  // weights = softmax(K c) as a 1 x h2 row
  Value logits = matmul(t, concept_vec, transpose(t, keys));
  Value weights = rowwise_softmax(t, logits);
  Value fused = matmul(t, weights, vals);  // 1 x d
  return {weights, fused};
}

Value average_fuse(Tape& t, const Value& a, const Value& b) {
  return scale(t, add(t, a, b), 0.5);
}

}  // namespace mixer

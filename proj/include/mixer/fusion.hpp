#pragma once

#include "mixer/layers.hpp"

namespace mixer {

// External attention memory: M_k (e x d) keys, M_v (d x e) values.
struct ConceptMemory {
  Value m_k;
  Value m_v;
};

// Position-wise maps from image channels (n) to the common dimension (d).
struct FusionParams {
  Linear f_k;
  Linear f_v;
};

struct ConceptResult {
  Value attn;     // 1 x e probability row
  Value concept_vec;  // 1 x d
};

struct FuseResult {
  Value weights;  // 1 x h2 probability row
  Value fused;    // 1 x d
};

// attn = softmax(M_k t), concept_vec = M_v attn. `text` is a 1 x d row.
ConceptResult extract_concept(Tape& t, const Value& text,
                              const ConceptMemory& mem);

// K = F_K(I), V = F_V(I); weights = softmax(K c); fused = V^T weights.
// `grid` is h2 x n, `concept_vec` a 1 x d row.
FuseResult fuse(Tape& t, const Value& grid, const Value& concept_vec,
                const FusionParams& fp);

// Elementwise mean of two equally shaped values (the naive-averaging
// baseline fusion).
Value average_fuse(Tape& t, const Value& a, const Value& b);

}  // namespace mixer

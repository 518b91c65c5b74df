#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixer/gradcheck.hpp"
#include "mixer/model.hpp"

#include <cmath>
#include <random>

using namespace mixer;

namespace {

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return g(rng); });
}

FusionParams identity_fusion(Eigen::Index n, Eigen::Index d) {
  FusionParams fp;
  fp.f_k.w = make_constant(Mat::Identity(n, d));
  fp.f_k.b = make_constant(Mat::Zero(1, d));
  fp.f_v.w = make_constant(Mat::Identity(n, d));
  fp.f_v.b = make_constant(Mat::Zero(1, d));
  return fp;
}

}  // namespace

TEST_CASE("extract_concept with e=1 ignores the text") {
  Tape t;
  Mat m_v(3, 1);
  m_v << 1, 2, 3;
  ConceptMemory mem{make_constant(Mat::Ones(1, 3)), make_constant(m_v)};
  std::mt19937_64 rng(0);
  ConceptResult r = extract_concept(t, make_constant(random_mat(rng, 1, 3)), mem);
  CHECK(r.attn->val(0, 0) == doctest::Approx(1.0));
  CHECK((r.concept_vec->val.transpose() - m_v).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("extract_concept with identical key rows gives uniform attention") {
  Tape t;
  std::mt19937_64 rng(1);
  Mat row = random_mat(rng, 1, 4);
  Mat m_k(3, 4);
  m_k << row, row, row;
  Mat m_v = random_mat(rng, 4, 3);
  ConceptMemory mem{make_constant(m_k), make_constant(m_v)};
  ConceptResult r = extract_concept(t, make_constant(random_mat(rng, 1, 4)), mem);
  for (int i = 0; i < 3; ++i) {
    CHECK(r.attn->val(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  Mat expect = m_v.rowwise().sum() / 3.0;
  CHECK((r.concept_vec->val.transpose() - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("extract_concept hand case d=2 e=2") {
  Tape t;
  Mat m_k(2, 2), m_v(2, 2), txt(1, 2);
  m_k << 1, 0, 0, 1;
  m_v << 1, 2, 3, 4;
  txt << 1, 0;
  ConceptMemory mem{make_constant(m_k), make_constant(m_v)};
  ConceptResult r = extract_concept(t, make_constant(txt), mem);
  CHECK(r.attn->val(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(r.attn->val(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(r.concept_vec->val(0, 0) == doctest::Approx(1.2689).epsilon(1e-4));
  CHECK(r.concept_vec->val(0, 1) == doctest::Approx(3.2689).epsilon(1e-4));
}

TEST_CASE("extract_concept rejects dimension mismatch") {
  Tape t;
  ConceptMemory mem{make_constant(Mat::Zero(2, 3)),
                    make_constant(Mat::Zero(3, 2))};
  CHECK_THROWS_AS(extract_concept(t, make_constant(Mat::Zero(1, 4)), mem),
                  std::invalid_argument);
}

TEST_CASE("fuse with identical key rows averages the value rows") {
  Tape t;
  std::mt19937_64 rng(2);
  // identity F_K/F_V so K_I = V_I = grid; grid rows identical in the key
  // pathway by construction
  Mat row = random_mat(rng, 1, 3);
  Mat grid(4, 3);
  grid << row, row, row, row;
  FuseResult r = fuse(t, make_constant(grid), make_constant(random_mat(rng, 1, 3)),
                      identity_fusion(3, 3));
  for (int i = 0; i < 4; ++i) {
    CHECK(r.weights->val(0, i) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK((r.fused->val - row).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fuse with a single position returns that value row") {
  Tape t;
  std::mt19937_64 rng(3);
  Mat grid = random_mat(rng, 1, 3);
  FuseResult r = fuse(t, make_constant(grid), make_constant(random_mat(rng, 1, 3)),
                      identity_fusion(3, 3));
  CHECK(r.weights->val(0, 0) == doctest::Approx(1.0));
  CHECK((r.fused->val - grid).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fuse hand case h2=2 d=2") {
  Tape t;
  // identity F maps make K_I and V_I equal the stated matrices
  Mat k_i(2, 2), c(1, 2);
  k_i << 1, 0, 0, 1;
  c << 1, 0;
  FusionParams fp = identity_fusion(2, 2);
  // V_I = [[2,0],[0,2]] via F_V = 2I
  fp.f_v.w = make_constant(Mat(2.0 * Mat::Identity(2, 2)));
  FuseResult r = fuse(t, make_constant(k_i), make_constant(c), fp);
  CHECK(r.weights->val(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(r.weights->val(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
  CHECK(r.fused->val(0, 0) == doctest::Approx(1.4622).epsilon(1e-4));
  CHECK(r.fused->val(0, 1) == doctest::Approx(0.5378).epsilon(1e-4));
}

TEST_CASE("attention outputs are probability vectors, fused in convex hull") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    Mat grid = random_mat(rng, 4, 3);
    FusionParams fp;
    fp.f_k.w = make_constant(random_mat(rng, 3, 5));
    fp.f_k.b = make_constant(random_mat(rng, 1, 5));
    fp.f_v.w = make_constant(random_mat(rng, 3, 5));
    fp.f_v.b = make_constant(random_mat(rng, 1, 5));
    FuseResult r = fuse(t, make_constant(grid), make_constant(random_mat(rng, 1, 5)), fp);
    CHECK(r.weights->val.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.weights->val.minCoeff() >= 0.0);
    // f_d = sum_i w_i * V_I.row(i): reconstruct explicitly
    Mat v_i = grid * fp.f_v.w->val;
    v_i.rowwise() += fp.f_v.b->val.row(0);
    Mat recon = Mat::Zero(1, 5);
    for (int i = 0; i < 4; ++i) recon += r.weights->val(0, i) * v_i.row(i);
    CHECK((r.fused->val - recon).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("zeroed M_v degenerates to the image-only column mean") {
  ModelConfig cfg;
  cfg.n_raw = 6;
  cfg.hidden = 4;
  cfg.h2 = 4;
  cfg.n = 3;
  cfg.d = 4;
  cfg.e = 2;
  cfg.vocab = 8;
  cfg.seed = 11;
  MixerModel m(cfg);
  m.params().get("fusion.m_v")->val.setZero();
  std::mt19937_64 rng(4);
  Mat raw = random_mat(rng, 1, 6);

  Tape t;
  Value grids = m.encode_image(t, make_constant(raw));
  Value grid = reshape_row(t, slice_row(t, grids, 0), cfg.h2, cfg.n);
  Value txt = m.encode_text(t, {3});
  ConceptResult cr = extract_concept(t, txt, m.concept_memory());
  CHECK(cr.concept_vec->val.cwiseAbs().maxCoeff() == 0.0);
  FuseResult fr = fuse(t, grid, cr.concept_vec, m.fusion_params());
  for (int i = 0; i < cfg.h2; ++i) {
    CHECK(fr.weights->val(0, i) == doctest::Approx(0.25).epsilon(1e-12));
  }
  Value vals = m.fusion_params().f_v.forward(t, grid);
  Mat col_mean = vals->val.colwise().mean();
  CHECK((fr.fused->val - col_mean).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("doc embeddings are unit norm and text-sensitive") {
  ModelConfig cfg;
  cfg.n_raw = 6;
  cfg.hidden = 4;
  cfg.h2 = 4;
  cfg.n = 3;
  cfg.d = 4;
  cfg.e = 2;
  cfg.vocab = 8;
  cfg.seed = 1;
  MixerModel m(cfg);
  std::mt19937_64 rng(5);
  Mat raw = random_mat(rng, 2, 6);
  Tape t;
  Mat z1 = m.embed_docs(t, raw, {{1, 2}, {3}}, false)->val;
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(z1.row(i).norm() - 1.0) <= 1e-12);
  }
  Tape t2;
  Mat z2 = m.embed_docs(t2, raw, {{4, 5}, {3}}, false)->val;
  CHECK((z1.row(0) - z2.row(0)).norm() > 1e-9);   // tokens changed
  CHECK((z1.row(1) - z2.row(1)).norm() == 0.0);   // tokens unchanged
}

TEST_CASE("doc embedding matches composed module oracle") {
  ModelConfig cfg;
  cfg.n_raw = 6;
  cfg.hidden = 4;
  cfg.h2 = 4;
  cfg.n = 3;
  cfg.d = 4;
  cfg.e = 2;
  cfg.vocab = 8;
  cfg.seed = 2;
  MixerModel m(cfg);
  std::mt19937_64 rng(6);
  Mat raw = random_mat(rng, 2, 6);
  std::vector<std::vector<int>> toks = {{1}, {2, 3}};
  Tape t;
  Mat z = m.embed_docs(t, raw, toks, false)->val;

  Tape t2;
  Value grids = m.encode_image(t2, make_constant(raw));
  std::vector<Value> rows;
  for (int i = 0; i < 2; ++i) {
    Value grid = reshape_row(t2, slice_row(t2, grids, i), cfg.h2, cfg.n);
    Value txt = m.encode_text(t2, toks[static_cast<std::size_t>(i)]);
    ConceptResult cr = extract_concept(t2, txt, m.concept_memory());
    FuseResult fr = fuse(t2, grid, cr.concept_vec, m.fusion_params());
    rows.push_back(fr.fused);
  }
  Value fused = concat_rows(t2, rows);
  Value expect = l2_normalize_rows(t2, m.transform_doc(t2, fused, false));
  CHECK((z - expect->val).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("average_fuse basics") {
  Tape t;
  std::mt19937_64 rng(8);
  Mat v = random_mat(rng, 1, 4);
  Value same = average_fuse(t, make_constant(v), make_constant(v));
  CHECK((same->val - v).cwiseAbs().maxCoeff() <= 1e-15);
  Value opposite = average_fuse(t, make_constant(v), make_constant(Mat(-v)));
  CHECK(opposite->val.cwiseAbs().maxCoeff() <= 1e-15);
  Mat a(1, 2), b(1, 2);
  a << 1, 3;
  b << 3, 1;
  Value mean = average_fuse(t, make_constant(a), make_constant(b));
  CHECK(mean->val(0, 0) == doctest::Approx(2.0));
  CHECK(mean->val(0, 1) == doctest::Approx(2.0));
  CHECK_THROWS_AS(
      average_fuse(t, make_constant(Mat::Zero(1, 2)), make_constant(Mat::Zero(1, 3))),
      std::invalid_argument);
}

TEST_CASE("fusion gradients match finite differences (suite)") {
  auto results = run_grad_checks(1e-4, false);
  for (const auto& r : results) {
    INFO(r.group, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("grad check detector flags corrupted gradients") {
  auto results = run_grad_checks(1e-4, true);
  bool any_fail = false;
  for (const auto& r : results) any_fail = any_fail || !r.pass;
  CHECK(any_fail);
}

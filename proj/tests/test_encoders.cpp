#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixer/model.hpp"

#include <cmath>
#include <random>

using namespace mixer;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_raw = 6;
  c.hidden = 5;
  c.h2 = 4;
  c.n = 3;
  c.d = 4;
  c.e = 2;
  c.vocab = 10;
  c.seed = 3;
  return c;
}

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return g(rng); });
}

}  // namespace

TEST_CASE("zero backbone weights give all-zero feature map") {
  MixerModel m(small_config());
  for (const std::string& name :
       {"backbone.l1.w", "backbone.l1.b", "backbone.l2.w", "backbone.l2.b"}) {
    m.params().get(name)->val.setZero();
  }
  Tape t;
  std::mt19937_64 rng(0);
  Value out = m.encode_image(t, make_constant(random_mat(rng, 2, 6)));
  CHECK(out->val.isZero(0.0));
}

TEST_CASE("shared backbone: same raw input gives same feature map either side") {
  MixerModel m(small_config());
  std::mt19937_64 rng(1);
  Mat raw = random_mat(rng, 1, 6);
  Tape t;
  Value as_query = m.encode_image(t, make_constant(raw));
  Value as_doc = m.encode_image(t, make_constant(raw));
  CHECK((as_query->val - as_doc->val).norm() == 0.0);
}

TEST_CASE("encode_image matches two-layer scalar oracle, seed 3") {
  MixerModel m(small_config());
  std::mt19937_64 rng(3);
  Mat raw = random_mat(rng, 1, 6);
  Tape t;
  Value out = m.encode_image(t, make_constant(raw));

  const Mat& w1 = m.params().get("backbone.l1.w")->val;
  const Mat& b1 = m.params().get("backbone.l1.b")->val;
  const Mat& w2 = m.params().get("backbone.l2.w")->val;
  const Mat& b2 = m.params().get("backbone.l2.b")->val;
  for (int j = 0; j < 12; ++j) {
    double acc2 = b2(0, j);
    for (int h = 0; h < 5; ++h) {
      double acc1 = b1(0, h);
      for (int i = 0; i < 6; ++i) acc1 += raw(0, i) * w1(i, h);
      acc2 += std::max(0.0, acc1) * w2(h, j);
    }
    CHECK(out->val(0, j) == doctest::Approx(acc2).epsilon(1e-10));
  }
}

TEST_CASE("encode_image rejects wrong input dimension") {
  MixerModel m(small_config());
  Tape t;
  CHECK_THROWS_AS(m.encode_image(t, make_constant(Mat::Zero(1, 7))),
                  std::invalid_argument);
}

TEST_CASE("encode_text: single token equals projected table row") {
  MixerModel m(small_config());
  Tape t;
  Value one = m.encode_text(t, {4});
  const Mat& table = m.params().get("text.table")->val;
  const Mat& w = m.params().get("text.proj.w")->val;
  const Mat& b = m.params().get("text.proj.b")->val;
  Mat expect = table.row(4) * w + b;
  CHECK((one->val - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("encode_text: repeated token equals single token") {
  MixerModel m(small_config());
  Tape t;
  Value a = m.encode_text(t, {2});
  Value aaa = m.encode_text(t, {2, 2, 2});
  CHECK((a->val - aaa->val).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("encode_text matches mean+projection oracle, seed 5") {
  ModelConfig c = small_config();
  c.seed = 5;
  MixerModel m(c);
  Tape t;
  Value out = m.encode_text(t, {1, 7});
  const Mat& table = m.params().get("text.table")->val;
  const Mat& w = m.params().get("text.proj.w")->val;
  const Mat& b = m.params().get("text.proj.b")->val;
  Mat mean = 0.5 * (table.row(1) + table.row(7));
  Mat expect = mean * w + b;
  CHECK((out->val - expect).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("encode_text error cases") {
  MixerModel m(small_config());
  Tape t;
  CHECK_THROWS_AS(m.encode_text(t, {}), std::invalid_argument);
  CHECK_THROWS_AS(m.encode_text(t, {10}), std::out_of_range);
  std::vector<int> too_long(21, 1);
  CHECK_THROWS_AS(m.encode_text(t, too_long), std::invalid_argument);
}

TEST_CASE("pooling identical grid rows returns the row") {
  Tape t;
  Mat x(1, 6);
  x << 1, 2, 1, 2, 1, 2;  // three positions of width 2, all equal
  Value out = pool_groups(t, make_constant(x), 3, 2);
  CHECK(out->val(0, 0) == doctest::Approx(1.0));
  CHECK(out->val(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("query embeddings are unit norm") {
  MixerModel m(small_config());
  std::mt19937_64 rng(9);
  Tape t;
  Value z = m.embed_queries(t, random_mat(rng, 3, 6), false);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(z->val.row(i).norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("query embedding matches composed oracle end to end") {
  MixerModel m(small_config());
  std::mt19937_64 rng(13);
  Mat raw = random_mat(rng, 2, 6);
  Tape t;
  Value z = m.embed_queries(t, raw, false);

  Tape t2;
  Value grid = m.encode_image(t2, make_constant(raw));
  Value pooled = pool_groups(t2, grid, 4, 3);
  Value head = m.transform_query(t2, pooled, false);
  Value expect = l2_normalize_rows(t2, head);
  CHECK((z->val - expect->val).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("transform: identity-configured layers pass input through") {
  ModelConfig c = small_config();
  c.n = c.d;  // square head
  MixerModel m(c);
  m.params().get("query_head.l1.fc.w")->val = Mat::Identity(c.n, c.d);
  m.params().get("query_head.l1.fc.b")->val.setZero();
  m.params().get("query_head.l2.w")->val = Mat::Identity(c.d, c.d);
  m.params().get("query_head.l2.b")->val.setZero();
  Mat x = Mat::Ones(3, c.d) + 0.5 * Mat::Identity(3, c.d);  // positive inputs
  Tape t;
  // inference BN with fresh running stats (mean 0, var 1) and eps ~ 0 is
  // the identity up to the eps factor
  Value y = m.transform_query(t, make_constant(x), false);
  CHECK((y->val - x).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("separate heads: query and doc transforms differ on same input") {
  ModelConfig c = small_config();
  c.variant = Variant::kMixerI;  // doc head takes n-dim input like query head
  MixerModel m(c);
  std::mt19937_64 rng(17);
  Mat x = random_mat(rng, 2, c.n);
  Tape t;
  Value q = m.transform_query(t, make_constant(x), false);
  Value d = m.transform_doc(t, make_constant(x), false);
  CHECK((q->val - d->val).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("head separation: mutating query head leaves doc embeddings fixed") {
  ModelConfig c = small_config();
  MixerModel m(c);
  std::mt19937_64 rng(21);
  Mat raw = random_mat(rng, 2, 6);
  std::vector<std::vector<int>> toks = {{1, 2}, {3}};
  Tape t1;
  Mat before = m.embed_docs(t1, raw, toks, false)->val;
  m.params().get("query_head.l2.w")->val.array() += 0.5;
  Tape t2;
  Mat after = m.embed_docs(t2, raw, toks, false)->val;
  CHECK((before - after).norm() == 0.0);
}

TEST_CASE("weight sharing: mutating backbone moves both towers") {
  ModelConfig c = small_config();
  MixerModel m(c);
  std::mt19937_64 rng(23);
  Mat raw = random_mat(rng, 2, 6);
  Tape t1;
  Mat q_before = m.embed_queries(t1, raw, false)->val;
  Mat d_before = m.embed_docs(t1, raw, {{1}, {2}}, false)->val;
  m.params().get("backbone.l1.w")->val.array() += 0.3;
  Tape t2;
  Mat q_after = m.embed_queries(t2, raw, false)->val;
  Mat d_after = m.embed_docs(t2, raw, {{1}, {2}}, false)->val;
  CHECK((q_before - q_after).norm() > 1e-9);
  CHECK((d_before - d_after).norm() > 1e-9);
}

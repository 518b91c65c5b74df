#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixer/gradcheck.hpp"
#include "mixer/layers.hpp"

#include <cmath>
#include <random>

using namespace mixer;

namespace {

// independent triple-loop oracle, no Eigen products
Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Mat::NullaryExpr(r, c, [&](Eigen::Index, Eigen::Index) { return g(rng); });
}

}  // namespace

TEST_CASE("matmul identity leaves input unchanged") {
  Tape t;
  Mat b(2, 3);
  b << 1, 2, 3, 4, 5, 6;
  Value out = matmul(t, make_constant(Mat::Identity(2, 2)), make_constant(b));
  CHECK((out->val - b).norm() == 0.0);
}

TEST_CASE("matmul zero annihilates") {
  Tape t;
  std::mt19937_64 rng(1);
  Value out = matmul(t, make_constant(Mat::Zero(3, 2)),
                     make_constant(random_mat(rng, 2, 4)));
  CHECK(out->val.isZero(0.0));
}

TEST_CASE("matmul matches triple-loop oracle, seed 7") {
  std::mt19937_64 rng(7);
  Mat a = random_mat(rng, 4, 4);
  Mat b = random_mat(rng, 4, 4);
  Tape t;
  Value out = matmul(t, make_constant(a), make_constant(b));
  CHECK((out->val - naive_matmul(a, b)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("matmul oracle property up to 64x64") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> dim(1, 64);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Index m = dim(rng), k = dim(rng), n = dim(rng);
    Mat a = random_mat(rng, m, k);
    Mat b = random_mat(rng, k, n);
    Tape t;
    Value out = matmul(t, make_constant(a), make_constant(b));
    CHECK((out->val - naive_matmul(a, b)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("matmul rejects dimension mismatch with shape report") {
  Tape t;
  CHECK_THROWS_WITH_AS(
      matmul(t, make_constant(Mat::Zero(2, 3)), make_constant(Mat::Zero(2, 2))),
      doctest::Contains("2x3"), std::invalid_argument);
}

TEST_CASE("softmax uniform input") {
  Tape t;
  Value out = rowwise_softmax(t, make_constant(Mat::Zero(1, 4)));
  for (int i = 0; i < 4; ++i) CHECK(out->val(0, i) == doctest::Approx(0.25));
}

TEST_CASE("softmax shift invariance and sum") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Mat x = random_mat(rng, 1, 6);
    Tape t;
    Mat shifted = x.array() + 100.0;
    Value a = rowwise_softmax(t, make_constant(x));
    Value b = rowwise_softmax(t, make_constant(shifted));
    CHECK((a->val - b->val).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(a->val.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a->val.minCoeff() > 0.0);
    CHECK(a->val.maxCoeff() < 1.0);
  }
}

TEST_CASE("softmax hand value e/(e+1)") {
  Tape t;
  Mat x(1, 2);
  x << 1, 0;
  Value out = rowwise_softmax(t, make_constant(x));
  CHECK(out->val(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(out->val(0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("l2_normalize 3-4-5, idempotence, scale invariance") {
  Mat v(1, 2);
  v << 3, 4;
  Tape t;
  Value out = l2_normalize_rows(t, make_constant(v));
  CHECK(out->val(0, 0) == doctest::Approx(0.6));
  CHECK(out->val(0, 1) == doctest::Approx(0.8));

  Value twice = l2_normalize_rows(t, out);
  CHECK((twice->val - out->val).norm() <= 1e-12);

  Value scaled = l2_normalize_rows(t, make_constant(Mat(17.0 * v)));
  CHECK((scaled->val - out->val).norm() <= 1e-12);
  CHECK(std::abs(out->val.norm() - 1.0) <= 1e-12);
}

TEST_CASE("l2_normalize rejects near-zero input") {
  Tape t;
  CHECK_THROWS_AS(l2_normalize_rows(t, make_constant(Mat::Zero(1, 3))),
                  std::runtime_error);
}

TEST_CASE("linear+BN identity configuration in inference mode") {
  ParamRegistry reg;
  std::mt19937_64 rng(0);
  LinearBN layer(reg, "l", 3, 3, rng);
  layer.fc.w->val = Mat::Identity(3, 3);
  layer.fc.b->val.setZero();
  layer.running_mean.setZero();
  layer.running_var.setOnes();
  layer.eps = 0.0;
  Mat x = random_mat(rng, 5, 3);
  Tape t;
  Value y = layer.forward(t, make_constant(x), false);
  CHECK((y->val - x).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("BN training output has zero mean unit variance before affine") {
  ParamRegistry reg;
  std::mt19937_64 rng(5);
  LinearBN layer(reg, "l", 3, 3, rng);
  // gamma=1, beta=0 so the affine step is the identity; eps=0 isolates the
  // plain normalization
  layer.eps = 0.0;
  Mat x = random_mat(rng, 16, 3);
  Tape t;
  Value y = layer.forward(t, make_constant(x), true);
  Mat mean = y->val.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() <= 1e-10);
  Mat var = (y->val.rowwise() - mean.row(0)).array().square().colwise().mean();
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(var(0, j) - 1.0) <= 1e-6);
  }
}

TEST_CASE("linear+BN matches step-by-step scalar oracle, seed 11") {
  ParamRegistry reg;
  std::mt19937_64 rng(11);
  LinearBN layer(reg, "l", 3, 2, rng);
  Mat x = random_mat(rng, 4, 3);
  Tape t;
  Value y = layer.forward(t, make_constant(x), true);

  // scalar re-computation
  const int b = 4, p = 3, q = 2;
  double z[4][2];
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < q; ++j) {
      double acc = layer.fc.b->val(0, j);
      for (int k = 0; k < p; ++k) acc += x(i, k) * layer.fc.w->val(k, j);
      z[i][j] = acc;
    }
  }
  for (int j = 0; j < q; ++j) {
    double mu = 0.0;
    for (int i = 0; i < b; ++i) mu += z[i][j];
    mu /= b;
    double var = 0.0;
    for (int i = 0; i < b; ++i) var += (z[i][j] - mu) * (z[i][j] - mu);
    var /= b;
    for (int i = 0; i < b; ++i) {
      double xhat = (z[i][j] - mu) / std::sqrt(var + layer.eps);
      double expect = layer.gamma->val(0, j) * xhat + layer.beta->val(0, j);
      CHECK(y->val(i, j) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("BN training with batch size 1 is rejected") {
  ParamRegistry reg;
  std::mt19937_64 rng(0);
  LinearBN layer(reg, "l", 3, 3, rng);
  Tape t;
  CHECK_THROWS_AS(layer.forward(t, make_constant(Mat::Zero(1, 3)), true),
                  std::invalid_argument);
}

TEST_CASE("backward of sum is all ones") {
  Tape t;
  Value v = make_param(Mat::Random(1, 5), "v");
  Value s = sum(t, v);
  t.backward(s);
  CHECK((v->grad.array() - 1.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("backward of squared norm is 2v") {
  Tape t;
  Value v = make_param(Mat::Random(1, 5), "v");
  Value s = sum(t, hadamard(t, v, v));
  t.backward(s);
  CHECK((v->grad - 2.0 * v->val).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Value v = make_param(Mat::Random(2, 2), "v");
  Value y = scale(t, v, 2.0);
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("non-trainable inputs receive no gradient") {
  Tape t;
  Value c = make_constant(Mat::Ones(1, 3));
  Value v = make_param(Mat::Ones(1, 3), "v");
  Value s = sum(t, hadamard(t, c, v));
  t.backward(s);
  CHECK(c->grad.size() == 0);
  CHECK((v->grad - Mat::Ones(1, 3)).norm() == 0.0);
}

TEST_CASE("finite differences validate primitive compositions") {
  std::mt19937_64 rng(2);
  Value a = make_param(random_mat(rng, 3, 4), "a");
  Value b = make_param(random_mat(rng, 4, 2), "b");
  auto forward = [&]() {
    Tape t;
    Value y = rowwise_softmax(t, relu(t, matmul(t, a, b)));
    Value z = l2_normalize_rows(t, add(t, y, make_constant(Mat::Ones(3, 2))));
    return sum(t, hadamard(t, z, z))->val(0, 0) +
           sum(t, mean_rows(t, z))->val(0, 0);
  };
  a->grad.setZero();
  b->grad.setZero();
  {
    Tape t;
    Value y = rowwise_softmax(t, relu(t, matmul(t, a, b)));
    Value z = l2_normalize_rows(t, add(t, y, make_constant(Mat::Ones(3, 2))));
    Value loss = add(t, sum(t, hadamard(t, z, z)), sum(t, mean_rows(t, z)));
    t.backward(loss);
  }
  CHECK(finite_diff_error(forward, a, a->grad) <= 1e-4);
  CHECK(finite_diff_error(forward, b, b->grad) <= 1e-4);
}

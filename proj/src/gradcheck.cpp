#include "mixer/gradcheck.hpp"

#include "mixer/fusion.hpp"
#include "mixer/layers.hpp"
#include "mixer/model.hpp"
#include "mixer/proxy_loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mixer {

double finite_diff_error(const std::function<double()>& forward, Value param,
                         const Mat& analytic, double step) {
  Mat fd = Mat::Zero(param->val.rows(), param->val.cols());
  for (Eigen::Index i = 0; i < param->val.rows(); ++i) {
    for (Eigen::Index j = 0; j < param->val.cols(); ++j) {
      double orig = param->val(i, j);
      param->val(i, j) = orig + step;
      double up = forward();
      param->val(i, j) = orig - step;
      double down = forward();
      param->val(i, j) = orig;
      fd(i, j) = (up - down) / (2.0 * step);
    }
  }
  // the floor absorbs parameters whose true gradient is exactly zero (a bias
  // ahead of batch norm, a key bias under softmax): both sides are then pure
  // rounding noise and their ratio is meaningless
  double denom = std::max(fd.norm() + analytic.norm(), 1e-6);
  return (fd - analytic).norm() / denom;
}

namespace {

struct Probe {
  Mat p;  // 1 x d fixed random direction
  explicit Probe(std::mt19937_64& rng, Eigen::Index d) {
    std::normal_distribution<double> g(0.0, 1.0);
    p = Mat::NullaryExpr(1, d, [&](Eigen::Index, Eigen::Index) { return g(rng); });
  }
};

GradCheckResult check_group(const std::string& group,
                            const std::function<double()>& forward,
                            const std::vector<Value>& params,
                            double tolerance, bool corrupt) {
  // analytic grads were already accumulated by the caller's backward pass
  GradCheckResult r;
  r.group = group;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Mat analytic = params[k]->grad;
    if (corrupt && k == 0) analytic.array() += 0.05;
    double err = finite_diff_error(forward, params[k], analytic);
    r.max_rel_err = std::max(r.max_rel_err, err);
  }
  r.pass = r.max_rel_err <= tolerance;
  return r;
}

}  // namespace

std::vector<GradCheckResult> run_grad_checks(double tolerance, bool corrupt) {
  constexpr int d = 8, e = 4, h2 = 4, C = 8, n = 6, batch = 4;
  std::vector<GradCheckResult> out;

  double fusion_worst = 0.0, heads_worst = 0.0, loss_worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    auto randn = [&](Eigen::Index r, Eigen::Index c) {
      return Mat::NullaryExpr(r, c,
                              [&](Eigen::Index, Eigen::Index) { return g(rng); });
    };

    // ---- fusion: probe . (fuse(extract_concept)) ----
    {
      ParamRegistry reg;
      Value t_in = make_param(0.5 * randn(1, d), "t");
      Value grid = make_param(0.5 * randn(h2, n), "I");
      ConceptMemory mem{make_param(0.7 * randn(e, d), "m_k"),
                        make_param(0.7 * randn(d, e), "m_v")};
      FusionParams fp;
      fp.f_k.w = make_param(0.5 * randn(n, d), "f_k.w");
      fp.f_k.b = make_param(0.1 * randn(1, d), "f_k.b");
      fp.f_v.w = make_param(0.5 * randn(n, d), "f_v.w");
      fp.f_v.b = make_param(0.1 * randn(1, d), "f_v.b");
      Probe probe(rng, d);
      auto forward = [&]() {
        Tape tape;
        ConceptResult cr = extract_concept(tape, t_in, mem);
        FuseResult fr = fuse(tape, grid, cr.concept_vec, fp);
        return (fr.fused->val.row(0) * probe.p.row(0).transpose())(0, 0);
      };
      std::vector<Value> params = {mem.m_k, mem.m_v, fp.f_k.w, fp.f_k.b,
                                   fp.f_v.w, fp.f_v.b, t_in, grid};
      for (auto& p : params) p->grad.setZero();
      {
        Tape tape;
        ConceptResult cr = extract_concept(tape, t_in, mem);
        FuseResult fr = fuse(tape, grid, cr.concept_vec, fp);
        Value score = matmul(tape, fr.fused, make_constant(probe.p.transpose()));
        tape.backward(score);
      }
      auto r = check_group("fusion", forward, params, tolerance, corrupt);
      fusion_worst = std::max(fusion_worst, r.max_rel_err);
    }

    // ---- transformation heads: probe . sum over batch of transform(x) ----
    {
      ParamRegistry reg;
      std::mt19937_64 lrng(seed + 100);
      LinearBN head1(reg, "head.l1", d, d, lrng);
      Linear head2(reg, "head.l2", d, d, lrng);
      Value x = make_param(randn(batch, d), "x");
      Probe probe(rng, d);
      auto forward = [&]() {
        Tape tape;
        Value y = head2.forward(tape, relu(tape, head1.forward(tape, x, true)));
        return (y->val * probe.p.row(0).transpose()).sum();
      };
      std::vector<Value> params = {head1.fc.w, head1.fc.b, head1.gamma,
                                   head1.beta, head2.w, head2.b, x};
      for (auto& p : params) p->grad.setZero();
      {
        Tape tape;
        Value y = head2.forward(tape, relu(tape, head1.forward(tape, x, true)));
        Value score = sum(tape, matmul(tape, y, make_constant(probe.p.transpose())));
        tape.backward(score);
      }
      auto r = check_group("heads", forward, params, tolerance, corrupt);
      heads_worst = std::max(heads_worst, r.max_rel_err);
    }

    // ---- margin loss wrt Z and W (away from the sin=0 clamp) ----
    {
      ParamRegistry reg;
      ProxyStore store(reg, C, d, 2, seed + 7);
      LossConfig cfg;
      cfg.s = 8.0;
      cfg.m = 0.3;
      cfg.knn_enabled = false;
      std::vector<int> labels;
      std::uniform_int_distribution<int> lab(0, C - 1);
      for (int i = 0; i < batch; ++i) labels.push_back(lab(rng));
      Mat z_raw = randn(batch, d);
      for (Eigen::Index i = 0; i < batch; ++i) z_raw.row(i).normalize();
      Value z = make_param(z_raw, "z");
      Value w = store.weights();
      // perturbing unit rows breaks the norm precondition; the closure
      // re-normalizes a copy, so the check covers the normalized direction
      auto forward = [&]() {
        Mat zn = z->val;
        for (Eigen::Index i = 0; i < zn.rows(); ++i) zn.row(i).normalize();
        Mat wn = w->val;
        for (Eigen::Index i = 0; i < wn.rows(); ++i) wn.row(i).normalize();
        Tape tape;
        ParamRegistry tmp_reg;
        ProxyStore tmp(tmp_reg, C, d, 2, 0);
        tmp.weights()->val = wn;
        Value zv = make_param(zn, "zv");
        Value loss = margin_loss(tape, zv, labels, tmp, cfg, nullptr);
        return loss->val(0, 0);
      };
      z->grad.setZero();
      w->grad.setZero();
      {
        Tape tape;
        Value loss = margin_loss(tape, z, labels, store, cfg, nullptr);
        tape.backward(loss);
      }
      // analytic grad of the raw (pre-normalization) z equals the projected
      // grad since z starts unit-norm; project FD the same way is implicit in
      // the re-normalizing closure, so compare against projected analytic
      std::vector<Value> params = {z, w};
      Mat gz = z->grad;
      for (Eigen::Index i = 0; i < gz.rows(); ++i) {
        gz.row(i) -= gz.row(i).dot(z->val.row(i)) * z->val.row(i);
      }
      Mat gw = w->grad;
      for (Eigen::Index i = 0; i < gw.rows(); ++i) {
        gw.row(i) -= gw.row(i).dot(w->val.row(i)) * w->val.row(i);
      }
      GradCheckResult r;
      r.group = "margin_loss";
      Mat ga = corrupt ? Mat((gz.array() + 0.05).matrix()) : gz;
      r.max_rel_err = finite_diff_error(forward, z, ga);
      r.max_rel_err =
          std::max(r.max_rel_err, finite_diff_error(forward, w, gw));
      r.pass = r.max_rel_err <= tolerance;
      loss_worst = std::max(loss_worst, r.max_rel_err);
    }
  }

  out.push_back({"fusion", fusion_worst, fusion_worst <= tolerance});
  out.push_back({"heads", heads_worst, heads_worst <= tolerance});
  out.push_back({"margin_loss", loss_worst, loss_worst <= tolerance});
  return out;
}

}  // namespace mixer

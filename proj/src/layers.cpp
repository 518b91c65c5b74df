#include "mixer/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mixer {

Value ParamRegistry::add(const std::string& name, Mat init) {
  if (params_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto v = make_param(std::move(init), name);
  params_[name] = v;
  return v;
}

Value ParamRegistry::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return it->second;
}

bool ParamRegistry::has(const std::string& name) const {
  return params_.count(name) != 0;
}

void ParamRegistry::zero_grads() {
  for (auto& [name, p] : params_) p->grad.setZero();
}

std::string ParamRegistry::group_of(const std::string& name) {
  auto pos = name.find('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

void ParamRegistry::sgd_step(double lr, const std::set<std::string>& frozen) {
  for (auto& [name, p] : params_) {
    if (frozen.count(group_of(name))) continue;
    p->val -= lr * p->grad;
  }
}

Mat init_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                 Eigen::Index fan_in) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

Mat random_unit_rows(std::mt19937_64& rng, Eigen::Index rows,
                     Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double nrm = 0.0;
    do {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
      nrm = m.row(i).norm();
    } while (nrm < 1e-8);
    m.row(i) /= nrm;
  }
  return m;
}

Linear::Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in,
               Eigen::Index out, std::mt19937_64& rng) {
  w = reg.add(name + ".w", init_uniform(rng, in, out, in));
  b = reg.add(name + ".b", init_uniform(rng, 1, out, in));
}

Value Linear::forward(Tape& t, const Value& x) const {
  return add_rowvec(t, matmul(t, x, w), b);
}

LinearBN::LinearBN(ParamRegistry& reg, const std::string& name,
                   Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
    : fc(reg, name + ".fc", in, out, rng) {
  gamma = reg.add(name + ".bn_gamma", Mat::Ones(1, out));
  beta = reg.add(name + ".bn_beta", Mat::Zero(1, out));
  running_mean = Mat::Zero(1, out);
  running_var = Mat::Ones(1, out);
}

Value LinearBN::forward(Tape& t, const Value& x, bool training) {
  Value z = fc.forward(t, x);
  Eigen::Index b = z->val.rows();
  Eigen::Index q = z->val.cols();
  if (training) {
    if (b < 2) {
      throw std::invalid_argument(
          "batch norm: training mode requires batch size >= 2");
    }
    Mat mu = z->val.colwise().mean();
    Mat centered = z->val.rowwise() - mu.row(0);
    Mat var = centered.array().square().colwise().mean();
    Mat inv_std = (var.array() + eps).sqrt().inverse();
    Mat xhat = centered.array().rowwise() * inv_std.row(0).array();

    running_mean = momentum * running_mean + (1.0 - momentum) * mu;
    running_var = momentum * running_var + (1.0 - momentum) * var;

    Value g = gamma;
    Value bt = beta;
    Mat out = (xhat.array().rowwise() * g->val.row(0).array()).rowwise() +
              bt->val.row(0).array();
    return t.record(
        std::move(out),
        [z, g, bt, xhat, inv_std, b, q](Node& n) {
          if (g->requires_grad) {
            g->grad += n.grad.cwiseProduct(xhat).colwise().sum();
          }
          if (bt->requires_grad) bt->grad += n.grad.colwise().sum();
          if (!z->requires_grad) return;
          double inv_b = 1.0 / static_cast<double>(b);
          for (Eigen::Index j = 0; j < q; ++j) {
            double gam = g->val(0, j);
            double istd = inv_std(0, j);
            double sum_g = n.grad.col(j).sum();
            double sum_gx = n.grad.col(j).dot(xhat.col(j));
            z->grad.col(j) +=
                gam * istd *
                (n.grad.col(j).array() - inv_b * sum_g -
                 xhat.col(j).array() * (inv_b * sum_gx))
                    .matrix();
          }
        },
        {z, g, bt});
  }
  // inference: affine with running stats
  Mat inv_std = (running_var.array() + eps).sqrt().inverse();
  Value g = gamma;
  Value bt = beta;
  Mat rm = running_mean;
  Mat scale_row = inv_std;
  Mat out = ((z->val.rowwise() - rm.row(0)).array().rowwise() *
             (scale_row.row(0).array() * g->val.row(0).array()))
                .rowwise() +
            bt->val.row(0).array();
  Mat xhat = (z->val.rowwise() - rm.row(0)).array().rowwise() *
             scale_row.row(0).array();
  return t.record(
      std::move(out),
      [z, g, bt, xhat, scale_row](Node& n) {
        if (g->requires_grad) {
          g->grad += n.grad.cwiseProduct(xhat).colwise().sum();
        }
        if (bt->requires_grad) bt->grad += n.grad.colwise().sum();
        if (z->requires_grad) {
          z->grad += (n.grad.array().rowwise() *
                      (scale_row.row(0).array() * g->val.row(0).array()))
                         .matrix();
        }
      },
      {z, g, bt});
}

}  // namespace mixer

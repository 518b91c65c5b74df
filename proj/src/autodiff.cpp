#include "mixer/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mixer {

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.rows() << "x" << a.cols()
     << " and " << b.rows() << "x" << b.cols();
  throw std::invalid_argument(os.str());
}

void check_finite(const Mat& m, const char* op) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string(op) + ": non-finite result");
  }
}

}  // namespace

Value make_constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = false;
  return n;
}

Value make_param(Mat v, std::string name) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->grad = Mat::Zero(n->val.rows(), n->val.cols());
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

Value Tape::record(Mat val, std::function<void(Node&)> backprop,
                   std::initializer_list<Value> parents) {
  return record(std::move(val), std::move(backprop),
                std::vector<Value>(parents));
}

Value Tape::record(Mat val, std::function<void(Node&)> backprop,
                   const std::vector<Value>& parents) {
  auto out = std::make_shared<Node>();
  out->val = std::move(val);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      out->requires_grad = true;
      break;
    }
  }
  if (out->requires_grad) {
    out->grad = Mat::Zero(out->val.rows(), out->val.cols());
    ops_.push_back({out, std::move(backprop)});
  }
  return out;
}

void Tape::backward(const Value& loss) {
  if (loss->val.rows() != 1 || loss->val.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  if (!loss->requires_grad) return;
  loss->grad(0, 0) = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backprop(*it->out);
  }
}

Value matmul(Tape& t, const Value& a, const Value& b) {
  if (a->val.cols() != b->val.rows()) shape_error("matmul", a->val, b->val);
  Mat out = a->val * b->val;
  return t.record(
      std::move(out),
      [a, b](Node& n) {
        if (a->requires_grad) a->grad.noalias() += n.grad * b->val.transpose();
        if (b->requires_grad) b->grad.noalias() += a->val.transpose() * n.grad;
      },
      {a, b});
}

Value transpose(Tape& t, const Value& a) {
  return t.record(
      a->val.transpose(),
      [a](Node& n) {
        if (a->requires_grad) a->grad += n.grad.transpose();
      },
      {a});
}

Value add(Tape& t, const Value& a, const Value& b) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    shape_error("add", a->val, b->val);
  }
  return t.record(
      a->val + b->val,
      [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad;
        if (b->requires_grad) b->grad += n.grad;
      },
      {a, b});
}

Value sub(Tape& t, const Value& a, const Value& b) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    shape_error("sub", a->val, b->val);
  }
  return t.record(
      a->val - b->val,
      [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad;
        if (b->requires_grad) b->grad -= n.grad;
      },
      {a, b});
}

Value hadamard(Tape& t, const Value& a, const Value& b) {
  if (a->val.rows() != b->val.rows() || a->val.cols() != b->val.cols()) {
    shape_error("hadamard", a->val, b->val);
  }
  return t.record(
      a->val.cwiseProduct(b->val),
      [a, b](Node& n) {
        if (a->requires_grad) a->grad += n.grad.cwiseProduct(b->val);
        if (b->requires_grad) b->grad += n.grad.cwiseProduct(a->val);
      },
      {a, b});
}

Value scale(Tape& t, const Value& a, double s) {
  return t.record(
      a->val * s,
      [a, s](Node& n) {
        if (a->requires_grad) a->grad += n.grad * s;
      },
      {a});
}

Value add_rowvec(Tape& t, const Value& x, const Value& row) {
  if (row->val.rows() != 1 || row->val.cols() != x->val.cols()) {
    shape_error("add_rowvec", x->val, row->val);
  }
  Mat out = x->val.rowwise() + row->val.row(0);
  return t.record(
      std::move(out),
      [x, row](Node& n) {
        if (x->requires_grad) x->grad += n.grad;
        if (row->requires_grad) row->grad += n.grad.colwise().sum();
      },
      {x, row});
}

Value relu(Tape& t, const Value& x) {
  return t.record(
      x->val.cwiseMax(0.0),
      [x](Node& n) {
        if (!x->requires_grad) return;
        x->grad += n.grad.cwiseProduct(
            (x->val.array() > 0.0).cast<double>().matrix());
      },
      {x});
}

Mat softmax_row(const Mat& x) {
  Mat out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double mx = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Value rowwise_softmax(Tape& t, const Value& x) {
  Mat y = softmax_row(x->val);
  return t.record(
      y,
      [x, y](Node& n) {
        if (!x->requires_grad) return;
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          double dot = n.grad.row(i).dot(y.row(i));
          x->grad.row(i) +=
              ((n.grad.row(i).array() - dot) * y.row(i).array()).matrix();
        }
      },
      {x});
}

Value l2_normalize_rows(Tape& t, const Value& x, double eps) {
  Mat y = x->val;
  std::vector<double> norms(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double nrm = y.row(i).norm();
    if (nrm <= eps) {
      throw std::runtime_error("l2_normalize: degenerate (near-zero) vector");
    }
    norms[static_cast<std::size_t>(i)] = nrm;
    y.row(i) /= nrm;
  }
  return t.record(
      y,
      [x, y, norms](Node& n) {
        if (!x->requires_grad) return;
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          double nrm = norms[static_cast<std::size_t>(i)];
          double dot = n.grad.row(i).dot(y.row(i));
          x->grad.row(i) += (n.grad.row(i) - dot * y.row(i)) / nrm;
        }
      },
      {x});
}

Value sum(Tape& t, const Value& x) {
  Mat out(1, 1);
  out(0, 0) = x->val.sum();
  return t.record(
      std::move(out),
      [x](Node& n) {
        if (x->requires_grad) {
          x->grad.array() += n.grad(0, 0);
        }
      },
      {x});
}

Value mean_rows(Tape& t, const Value& x) {
  Mat out = x->val.colwise().mean();
  double inv = 1.0 / static_cast<double>(x->val.rows());
  return t.record(
      std::move(out),
      [x, inv](Node& n) {
        if (x->requires_grad) {
          x->grad.rowwise() += inv * n.grad.row(0);
        }
      },
      {x});
}

Value slice_row(Tape& t, const Value& x, Eigen::Index i) {
  if (i < 0 || i >= x->val.rows()) {
    throw std::out_of_range("slice_row: row index out of range");
  }
  return t.record(
      x->val.row(i),
      [x, i](Node& n) {
        if (x->requires_grad) x->grad.row(i) += n.grad.row(0);
      },
      {x});
}

Value concat_rows(Tape& t, const std::vector<Value>& rows) {
  if (rows.empty()) throw std::invalid_argument("concat_rows: empty input");
  Eigen::Index cols = rows.front()->val.cols();
  Mat out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->val.rows() != 1 || rows[i]->val.cols() != cols) {
      shape_error("concat_rows", rows.front()->val, rows[i]->val);
    }
    out.row(static_cast<Eigen::Index>(i)) = rows[i]->val.row(0);
  }
  return t.record(
      std::move(out),
      [rows](Node& n) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i]->requires_grad) {
            rows[i]->grad.row(0) += n.grad.row(static_cast<Eigen::Index>(i));
          }
        }
      },
      rows);
}

Value reshape_row(Tape& t, const Value& x, Eigen::Index r, Eigen::Index c) {
  if (x->val.rows() != 1 || x->val.cols() != r * c) {
    throw std::invalid_argument("reshape_row: size mismatch");
  }
  Mat out(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    out.row(i) = x->val.block(0, i * c, 1, c);
  }
  return t.record(
      std::move(out),
      [x, r, c](Node& n) {
        if (!x->requires_grad) return;
        for (Eigen::Index i = 0; i < r; ++i) {
          x->grad.block(0, i * c, 1, c) += n.grad.row(i);
        }
      },
      {x});
}

Value pool_groups(Tape& t, const Value& x, Eigen::Index groups,
                  Eigen::Index c) {
  if (x->val.cols() != groups * c) {
    throw std::invalid_argument("pool_groups: size mismatch");
  }
  Mat out = Mat::Zero(x->val.rows(), c);
  for (Eigen::Index g = 0; g < groups; ++g) {
    out += x->val.block(0, g * c, x->val.rows(), c);
  }
  out /= static_cast<double>(groups);
  return t.record(
      std::move(out),
      [x, groups, c](Node& n) {
        if (!x->requires_grad) return;
        double inv = 1.0 / static_cast<double>(groups);
        for (Eigen::Index g = 0; g < groups; ++g) {
          x->grad.block(0, g * c, x->val.rows(), c) += inv * n.grad;
        }
      },
      {x});
}

Value gather_mean(Tape& t, const Value& table, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("gather_mean: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= table->val.rows()) {
      throw std::out_of_range("gather_mean: id " + std::to_string(id) +
                              " outside table of " +
                              std::to_string(table->val.rows()) + " rows");
    }
  }
  Mat out = Mat::Zero(1, table->val.cols());
  for (int id : ids) out += table->val.row(id);
  out /= static_cast<double>(ids.size());
  check_finite(out, "gather_mean");
  return t.record(
      std::move(out),
      [table, ids](Node& n) {
        if (!table->requires_grad) return;
        double inv = 1.0 / static_cast<double>(ids.size());
        for (int id : ids) table->grad.row(id) += inv * n.grad.row(0);
      },
      {table});
}

}  // namespace mixer

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mixer {

using Mat = Eigen::MatrixXd;

// A node in the compute graph. Vectors are stored as 1xN row matrices so the
// whole pipeline can stay batched (rows = samples).
struct Node {
  Mat val;
  Mat grad;
  bool requires_grad = false;
  std::string name;
};

using Value = std::shared_ptr<Node>;

Value make_constant(Mat v);
Value make_param(Mat v, std::string name);

// Records primitive ops in execution order; backward() replays them reversed.
class Tape {
 public:
  Value record(Mat val, std::function<void(Node&)> backprop,
               std::initializer_list<Value> parents);
  Value record(Mat val, std::function<void(Node&)> backprop,
               const std::vector<Value>& parents);

  // Seeds d(loss)/d(loss)=1 and accumulates grads into every node that
  // requires them. Throws if loss is not 1x1.
  void backward(const Value& loss);

  std::size_t size() const { return ops_.size(); }

 private:
  struct Op {
    Value out;
    std::function<void(Node&)> backprop;
  };
  std::vector<Op> ops_;
};

// ---- primitive ops ----

Value matmul(Tape& t, const Value& a, const Value& b);
Value transpose(Tape& t, const Value& a);
Value add(Tape& t, const Value& a, const Value& b);
Value sub(Tape& t, const Value& a, const Value& b);
Value hadamard(Tape& t, const Value& a, const Value& b);
Value scale(Tape& t, const Value& a, double s);
// Broadcasts a 1xq row over every row of X.
Value add_rowvec(Tape& t, const Value& x, const Value& row);
Value relu(Tape& t, const Value& x);
// Row-wise softmax with max subtraction.
Value rowwise_softmax(Tape& t, const Value& x);
// Row-wise L2 normalization. Throws if any row norm <= eps.
Value l2_normalize_rows(Tape& t, const Value& x, double eps = 1e-12);
Value sum(Tape& t, const Value& x);
Value mean_rows(Tape& t, const Value& x);
// Extracts row i as a 1xq value.
Value slice_row(Tape& t, const Value& x, Eigen::Index i);
// Stacks 1xq rows into a matrix.
Value concat_rows(Tape& t, const std::vector<Value>& rows);
// Reshapes a 1x(r*c) row into an rxc matrix, row-major.
Value reshape_row(Tape& t, const Value& x, Eigen::Index r, Eigen::Index c);
// Mean over g groups of width c within each row: bx(g*c) -> bxc.
Value pool_groups(Tape& t, const Value& x, Eigen::Index groups, Eigen::Index c);
// Mean of table rows selected by ids (ids may repeat); returns 1xd.
Value gather_mean(Tape& t, const Value& table, const std::vector<int>& ids);

// Plain-softmax convenience on a row vector (no tape).
Mat softmax_row(const Mat& x);

}  // namespace mixer

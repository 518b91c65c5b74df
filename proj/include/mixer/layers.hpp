#pragma once

#include "mixer/autodiff.hpp"

#include <map>
#include <random>
#include <set>
#include <string>

namespace mixer {

// Owns every trainable tensor, keyed by dotted name ("group.layer.tensor").
// std::map keeps iteration order deterministic.
class ParamRegistry {
 public:
  Value add(const std::string& name, Mat init);
  Value get(const std::string& name) const;
  bool has(const std::string& name) const;
  void zero_grads();
  // w <- w - lr * grad, skipping params whose group (prefix before the first
  // '.') is in `frozen`.
  void sgd_step(double lr, const std::set<std::string>& frozen = {});
  const std::map<std::string, Value>& all() const { return params_; }
  static std::string group_of(const std::string& name);

 private:
  std::map<std::string, Value> params_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
Mat init_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                 Eigen::Index fan_in);
Mat random_unit_rows(std::mt19937_64& rng, Eigen::Index rows,
                     Eigen::Index cols);

// Fully connected layer with bias.
struct Linear {
  Value w;  // p x q
  Value b;  // 1 x q
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in,
         Eigen::Index out, std::mt19937_64& rng);
  Value forward(Tape& t, const Value& x) const;
};

// FC -> batch norm. Running stats use momentum 0.9, epsilon 1e-5, biased
// batch variance.
struct LinearBN {
  Linear fc;
  Value gamma;  // 1 x q
  Value beta;   // 1 x q
  Mat running_mean;  // 1 x q
  Mat running_var;   // 1 x q
  double momentum = 0.9;
  double eps = 1e-5;

  LinearBN() = default;
  LinearBN(ParamRegistry& reg, const std::string& name, Eigen::Index in,
           Eigen::Index out, std::mt19937_64& rng);
  // Training mode requires batch >= 2 and updates running stats.
  Value forward(Tape& t, const Value& x, bool training);
};

}  // namespace mixer

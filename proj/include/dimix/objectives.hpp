#pragma once

#include "dimix/linalg.hpp"
#include "dimix/rng.hpp"
#include "dimix/topology.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dimix {

/// N labelled points, one feature row per point.
struct Dataset {
  Matrix features; // N x d
  Vector labels;   // N
  std::uint64_t seed = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

enum class LossKind { linear_regression, logistic_regression_l2, quadratic_toy };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Per-point loss l(x, xi):
///   linear_regression:       1/2 (v - u^T x)^2
///   logistic_regression_l2:  log(1 + e^{u^T x}) - y u^T x + reg/2 ||x||^2, y in {0,1}
///   quadratic_toy:           1/2 (x - c)^T H (x - c), H = diag of d values log-spaced
///                            from 1 down to 1/condition, c the feature row
struct LossModel {
  LossKind kind = LossKind::quadratic_toy;
  double reg = 0.0;
  double condition = 10.0;
};

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

/// (v, u, x~) with u_i ~ U(0,1)^d, x~ ~ U(-1,1)^d, eps_i ~ U(0, label_noise) and
/// v_i = u_i^T x~ + eps_i. label_noise = 0 gives noiseless labels.
struct GeneratedData {
  Dataset data;
  Vector truth;
};
GeneratedData gen_linreg(Index N, Index d, std::uint64_t seed, double label_noise = 0.1);

/// u_i ~ N(0, I_d), w* ~ N(0, I_d), y_i ~ Bernoulli(sigmoid(u_i^T w*)).
GeneratedData gen_logistic(Index N, Index d, std::uint64_t seed);

/// Centers c_i ~ N(0, I_d); labels unused.
GeneratedData gen_quadratic_toy(Index N, Index d, std::uint64_t seed);

/// Diagonal curvature of the quadratic toy.
Vector toy_curvature(const LossModel& model, Index d);

ValueGrad linreg_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& u,
                            const Eigen::Ref<const Vector>& v);
ValueGrad logistic_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& u,
                              const Eigen::Ref<const Vector>& y, double reg);
ValueGrad quadratic_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& centers,
                               const Vector& curvature);

/// Mean loss and gradient of the model over the given rows.
ValueGrad value_grad(const LossModel& model, const Vector& x, const Eigen::Ref<const Matrix>& u,
                     const Eigen::Ref<const Vector>& labels);

/// Disjoint blocks of point indices, one per agent, sized by largest-remainder
/// rounding of r_i N. `weights` holds the realized fractions m_i / N.
struct Partition {
  std::vector<std::vector<Index>> assignments;
  StochasticVector target;
  StochasticVector weights;

  Index agents() const { return static_cast<Index>(assignments.size()); }
};

Partition partition(const Dataset& data, const StochasticVector& r, std::uint64_t seed);

/// Block sizes from largest-remainder rounding of r_i N (ties to the lower index).
std::vector<Index> largest_remainder_sizes(const StochasticVector& r, Index N);

/// Loss model, data, and partition bundled with per-agent copies of the local
/// blocks. f_i is the mean loss over block i, f = sum_i (m_i/N) f_i.
class DistributedObjective {
public:
  DistributedObjective(LossModel model, Dataset data, Partition part);

  const LossModel& model() const { return model_; }
  const Dataset& data() const { return data_; }
  const Partition& part() const { return part_; }
  const StochasticVector& weights() const { return part_.weights; }
  Index agents() const { return part_.agents(); }
  Index dim() const { return data_.dim(); }

  /// Exact local gradient of f_i.
  Vector local_grad(Index agent, const Vector& x) const;
  /// Uniform mini-batch of `batch` local points drawn without replacement.
  Vector local_grad(Index agent, const Vector& x, Index batch, KeyedRng& rng) const;
  ValueGrad local_value_grad(Index agent, const Vector& x) const;

  ValueGrad global_value_grad(const Vector& x) const;

private:
  LossModel model_;
  Dataset data_;
  Partition part_;
  std::vector<Matrix> local_features_;
  std::vector<Vector> local_labels_;
};

/// Gradient Lipschitz constant: lambda_max((1/m) U^T U) by power iteration for
/// linear regression, that value / 4 + reg for logistic, max curvature for the toy.
double smoothness_estimate(const LossModel& model, const Dataset& data);

/// Mean squared deviation of per-point gradients around the full gradient, at x.
double gradient_variance_estimate(const LossModel& model, const Dataset& data, const Vector& x);

/// CSV with header f0,...,f{d-1},label and 17 significant digits.
void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);

} // namespace dimix

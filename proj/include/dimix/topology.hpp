#pragma once

#include "dimix/linalg.hpp"
#include "dimix/schedules.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dimix {

/// Strictly positive vector summing to one. Plays two roles at once: the
/// common left eigenvector of every mixing matrix (r^T W(t) = r^T) and the
/// data fractions r_i = m_i / N of the agents.
class StochasticVector {
public:
  static constexpr double tolerance = 1e-12;

  explicit StochasticVector(Vector entries);

  static StochasticVector uniform(Index n);
  /// r_i = p_i / sum(p) with p_i ~ U(lo, hi).
  static StochasticVector random(Index n, std::uint64_t seed, double lo = 0.01, double hi = 0.9);

  Index size() const { return entries_.size(); }
  double operator[](Index i) const { return entries_[i]; }
  const Vector& entries() const { return entries_; }
  double min() const { return entries_.minCoeff(); }

private:
  Vector entries_;
};

/// A row-stochastic mixing matrix together with the lower bound eta on its
/// nonzero entries.
struct WeightMatrix {
  Matrix entries;
  double eta = 0.0;
};

struct WeightMatrixReport {
  double min_entry = 0.0;
  double row_sum_error = 0.0;
  double stationarity_error = 0.0; // max |r^T W - r^T|
  double min_nonzero = 0.0;
  bool valid = false;
};

/// Non-negativity, W 1 = 1, r^T W = r^T and nonzero entries >= eta.
WeightMatrixReport check_weight_matrix(const WeightMatrix& w, const StochasticVector& r,
                                       double tol = StochasticVector::tolerance);

enum class TopologyKind { cycle, gossip, erdos_renyi, custom };

std::string to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(const std::string& name);

/// Deterministic, periodic sequence of mixing matrices W(1), W(2), ...
/// W(t) = period[(t-1) mod period.size()]. Immutable once built.
class WeightSchedule {
public:
  WeightSchedule(TopologyKind kind, StochasticVector r, int connectivity_window,
                 std::vector<Matrix> period);

  TopologyKind kind() const { return kind_; }
  Index size() const { return r_.size(); }
  const StochasticVector& r() const { return r_; }
  int connectivity_window() const { return window_; }
  std::size_t period() const { return period_.size(); }
  /// Minimum nonzero entry over one full period.
  double eta() const { return eta_; }

  const Matrix& matrix_at(std::int64_t t) const;
  WeightMatrix at(std::int64_t t) const { return {matrix_at(t), eta_}; }

  /// Construction parameters kept for the JSON description.
  std::uint64_t seed = 0;
  double edge_prob = 0.0;
  double c = 0.0;

private:
  TopologyKind kind_;
  StochasticVector r_;
  int window_;
  std::vector<Matrix> period_;
  double eta_;
};

/// Time-invariant ring with W_ij = r_j / (2 (r_i + r_j)) for the two ring
/// neighbours and the complementary self weight. Requires n >= 3.
WeightSchedule make_cycle_fixed(const StochasticVector& r);

/// One ring edge {<t>, <t+1>} active per step, mixing with weights
/// r_j / (r_<t> + r_<t+1>); all other agents hold. B = n.
WeightSchedule make_cyclic_gossip(const StochasticVector& r);

/// Fixed matrix derived from a connected Erdos-Renyi graph G:
///   A = I - L_G / (d_max + 1),  W = I + c rhat_min diag(r)^{-1} (A - I),
///   rhat_min = min_i r_i / (1 - A_ii).
/// Resamples the graph up to 100 times until it is connected.
WeightSchedule make_er_fixed(Index n, double edge_prob, const StochasticVector& r, double c,
                             std::uint64_t seed);

/// Adjacency (without self loops) of the Erdos-Renyi graph that
/// make_er_fixed(n, p, r, c, seed) uses.
std::vector<std::vector<bool>> er_graph(Index n, double edge_prob, std::uint64_t seed);

/// A(t) = (1 - beta) I + beta W. beta must lie in (0,1].
WeightMatrix effective_mixing(const WeightMatrix& w, double beta);

/// sqrt(sum_i r_i ||M_i||^2), M_i the i-th row.
double r_norm(const Matrix& m, const StochasticVector& r);

struct TransitionProduct {
  Matrix matrix;
  std::int64_t s = 0;
  std::int64_t t = 0;
};

/// Phi(t:s) = A(t-1) ... A(s+1), with Phi(s+1:s) = I. beta[0] = beta(1).
TransitionProduct transition_product(const WeightSchedule& schedule, std::span<const double> beta,
                                     std::int64_t s, std::int64_t t);

/// lambda = eta r_min / (2 B n^2) of the contraction bound.
double contraction_rate(const WeightSchedule& schedule);
/// kappa = (1 - B lambda beta(1))^{-1}.
double contraction_kappa(const WeightSchedule& schedule, double beta1);

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs; }
};

/// lhs = ||(Phi(t:s) - 1 r^T) U||_r^2, rhs = kappa prod_{k=s+1}^{t-1} (1 - lambda beta(k)) ||U||_r^2.
InequalityCheck contraction_check(const WeightSchedule& schedule, const ScheduleParams& beta_params,
                                  const Matrix& u, std::int64_t s, std::int64_t t);

struct ContractionSweep {
  double lambda = 0.0;
  double kappa = 0.0;
  std::int64_t pairs = 0;
  double max_ratio = 0.0;     // max lhs / rhs over the sweep
  double max_violation = 0.0; // max (lhs - rhs), <= 0 when the bound holds
  bool holds = true;
};

/// contraction_check over every 1 <= s < t <= t_max and every U, sharing the
/// incremental products Phi(t+1:s) = A(t) Phi(t:s).
ContractionSweep contraction_sweep(const WeightSchedule& schedule, const ScheduleParams& beta_params,
                                   const std::vector<Matrix>& us, std::int64_t t_max);

/// True iff the union of edges (j,i) with W_ij(k) > 0 over
/// k = t_start+1 .. t_start+B forms a strongly connected digraph.
bool check_b_connected(const WeightSchedule& schedule, std::int64_t t_start, int B);

/// Strong connectivity of a digraph given as an adjacency matrix.
bool strongly_connected(const std::vector<std::vector<bool>>& adjacency);

/// ||u + v||^2 <= (1 + omega) ||u||^2 + (1 + 1/omega) ||v||^2
InequalityCheck young_inequality_check(const Vector& u, const Vector& v, double omega);
/// Same inequality with the r-norm of matrices.
InequalityCheck young_inequality_check(const Matrix& u, const Matrix& v, const StochasticVector& r,
                                       double omega);

/// ||A B||_r <= ||A||_r ||B||_F
InequalityCheck mixed_norm_check(const Matrix& a, const Matrix& b, const StochasticVector& r);

nlohmann::json describe(const WeightSchedule& schedule);
WeightSchedule schedule_from_json(const nlohmann::json& j);

} // namespace dimix

#pragma once

#include "dimix/linalg.hpp"
#include "dimix/lossy.hpp"
#include "dimix/objectives.hpp"
#include "dimix/schedules.hpp"
#include "dimix/topology.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimix {

/// Agent estimates X(t), one row per agent.
struct StateMatrix {
  RowMatrix x;
  std::int64_t t = 1;

  static StateMatrix zeros(Index n, Index d) { return {RowMatrix::Zero(n, d), 1}; }
};

enum class StepMode { diminishing, fixed };

struct TopologySpec {
  TopologyKind kind = TopologyKind::cycle;
  Index n = 4;
  /// "uniform", "random" (p_i ~ U(0.01, 0.9), normalized) or "explicit".
  std::string r_mode = "uniform";
  std::vector<double> r_explicit;
  std::uint64_t r_seed = 0;
  double edge_prob = 0.3;
  double c = 0.95;
  std::uint64_t seed = 0;

  friend bool operator==(const TopologySpec&, const TopologySpec&) = default;
};

struct ChannelSpec {
  ChannelKind kind = ChannelKind::perfect;
  int k = 1;
  int s = 1;
  double zeta = 0.0;
  std::optional<double> norm_cap;

  friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

struct LossSpec {
  LossKind kind = LossKind::quadratic_toy;
  Index N = 200;
  Index d = 10;
  double reg = 0.01;
  double condition = 10.0;
  double label_noise = 0.1;
  std::uint64_t data_seed = 0;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

struct RunConfig {
  ScheduleParams schedule;
  StepMode mode = StepMode::diminishing;
  double fixed_alpha = 0.001;
  double fixed_beta = 0.01;
  TopologySpec topology;
  ChannelSpec channel;
  LossSpec loss;
  std::int64_t T = 10000;
  std::uint64_t seed = 0;
  std::int64_t record_every = 10;
  std::optional<Index> batch;
  /// Number of independent runs (seeds seed, seed+1, ...) averaged for M_theta.
  int seeds = 1;
  /// Keep the per-step gradient-norm and variance series (needed by M_theta, M_1).
  bool dense_series = false;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// The step sizes actually used: the diminishing parameters, or the constant
/// pair expressed with nu = mu = tau = 0.
ScheduleParams effective_schedule(const RunConfig& config);

/// Throws std::invalid_argument naming the violated constraint.
std::vector<std::string> validate(const RunConfig& config);

/// Everything one simulation needs, built once from a config and shared by
/// all seeds of a sweep.
struct Problem {
  DistributedObjective objective;
  WeightSchedule topology;
  LossyChannel channel;
  ScheduleParams steps;
  std::optional<Index> batch;

  const StochasticVector& r() const { return topology.r(); }
};

Problem build_problem(const RunConfig& config);

/// Per-step internals exposed for identity checks: realized neighbour noise
/// E(t) (xhat - W X) and the local gradients used.
struct StepTrace {
  RowMatrix noise;
  RowMatrix grads;
  double alpha = 0.0;
  double beta = 0.0;
};

class DivergenceError : public std::runtime_error {
public:
  DivergenceError(std::int64_t t, Index agent, const std::string& what)
      : std::runtime_error(what), t_(t), agent_(agent) {}
  std::int64_t t() const { return t_; }
  Index agent() const { return agent_; }

private:
  std::int64_t t_;
  Index agent_;
};

/// Any ||x_i||^2 above this aborts the run.
inline constexpr double divergence_threshold = 1e12;

/// One synchronous update X(t) -> X(t+1):
///   x_i(t+1) = (1 - beta(t)) x_i(t) + beta(t) xhat_i(t) - alpha(t) beta(t) grad f_i(x_i(t)).
/// Agents are updated in parallel (OpenMP); all randomness is keyed on
/// (seed, t, i, j), so the result does not depend on the thread count.
StateMatrix dimix_step(const StateMatrix& x, const Problem& problem, std::uint64_t seed,
                       StepTrace* trace = nullptr);

/// Single-threaded reference for dimix_step; must agree bit for bit.
StateMatrix dimix_step_serial(const StateMatrix& x, const Problem& problem, std::uint64_t seed,
                              StepTrace* trace = nullptr);

/// ||xbar(t+1) - [xbar(t) + beta r^T E(t) - alpha beta r^T grad F(X(t))]||.
double average_dynamics_residual(const StateMatrix& before, const StateMatrix& after,
                                 const StepTrace& trace, const StochasticVector& r);

struct TrajectoryRow {
  std::int64_t t = 0;
  double net_variance = 0.0;
  double grad_norm_sq_at_mean = 0.0;
  double f_at_mean = 0.0;
  double max_row_norm_sq = 0.0;
  double alpha_t = 0.0;
  double beta_t = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  /// Entry t-1 holds the value at time t; filled only in dense mode.
  std::vector<double> dense_grad_norm_sq;
  std::vector<double> dense_net_variance;
};

struct RunResult {
  TrajectoryRecord trajectory;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::int64_t diverged_at = 0;
  Index diverged_agent = -1;
  std::string divergence_message;
  double max_row_norm_sq_seen = 0.0;
  bool norm_cap_exceeded = false;
};

/// Times at which a run records metrics: every `stride` steps starting at 1,
/// about 20 log-spaced checkpoints per decade, and T itself.
std::vector<std::int64_t> recording_times(std::int64_t T, std::int64_t stride);

/// Runs DIMIX from X(1) = 0 for T-1 steps with the given seed.
RunResult run(const Problem& problem, const RunConfig& config, std::uint64_t seed);
/// Convenience: build the problem and run with config.seed.
RunResult run(const RunConfig& config);

/// config.seeds independent runs with seeds config.seed, config.seed + 1, ...
/// on the same problem. Runs execute concurrently; the result order is by seed.
std::vector<RunResult> run_many(const Problem& problem, const RunConfig& config);
std::vector<RunResult> run_many_serial(const Problem& problem, const RunConfig& config);

/// Entry-wise mean of the dense gradient-norm series over runs. All runs must
/// be dense, undiverged and of equal length.
std::vector<double> mean_dense_grad_norm_sq(const std::vector<RunResult>& runs);

} // namespace dimix

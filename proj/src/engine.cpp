#include "dimix/engine.hpp"

#include "dimix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dimix {

ScheduleParams effective_schedule(const RunConfig& config)
{
  if (config.mode == StepMode::fixed) return fixed_step_mode(config.fixed_alpha, config.fixed_beta);
  return config.schedule;
}

std::vector<std::string> validate(const RunConfig& config)
{
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (config.T < 1) fail("T must be >= 1");
  if (config.record_every < 1) fail("record_every must be >= 1");
  if (config.seeds < 1) fail("seeds must be >= 1");
  std::vector<std::string> warnings = validate(effective_schedule(config));

  const auto& topo = config.topology;
  if (topo.n < 1) fail("topology.n must be >= 1");
  if (topo.kind == TopologyKind::cycle && topo.n < 3) fail("topology.n must be >= 3 for the cycle");
  if (topo.kind == TopologyKind::gossip && topo.n < 2) fail("topology.n must be >= 2 for gossip");
  if (topo.kind == TopologyKind::erdos_renyi && !(topo.edge_prob > 0.0 && topo.edge_prob <= 1.0)) {
    fail("topology.edge_prob must lie in (0,1]");
  }
  if (topo.kind == TopologyKind::erdos_renyi && !(topo.c > 0.0 && topo.c <= 1.0)) {
    fail("topology.c must lie in (0,1]");
  }
  if (topo.kind == TopologyKind::custom) fail("topology.kind 'custom' cannot be built from a config");
  if (topo.r_mode == "explicit") {
    if (static_cast<Index>(topo.r_explicit.size()) != topo.n) fail("topology.r has the wrong length");
  } else if (topo.r_mode != "uniform" && topo.r_mode != "random") {
    fail("topology.r_mode must be uniform, random or explicit");
  }

  const auto& loss = config.loss;
  if (loss.d < 1) fail("loss.d must be >= 1");
  if (loss.N < topo.n) fail("loss.N must be at least topology.n");
  if (loss.kind == LossKind::logistic_regression_l2 && loss.reg < 0.0) fail("loss.reg must be >= 0");
  if (loss.kind == LossKind::quadratic_toy && !(loss.condition >= 1.0)) fail("loss.condition must be >= 1");

  const auto& ch = config.channel;
  switch (ch.kind) {
  case ChannelKind::perfect: break;
  case ChannelKind::rand_k:
    if (ch.k < 1 || ch.k > loss.d) fail("channel.k must lie in [1, d]");
    if (!ch.norm_cap) fail("channel.D is required for rand_k");
    break;
  case ChannelKind::quantizer:
    if (ch.s < 1) fail("channel.s must be >= 1");
    if (!ch.norm_cap) fail("channel.D is required for the quantizer");
    break;
  case ChannelKind::gaussian:
    if (!(ch.zeta >= 0.0)) fail("channel.zeta must be >= 0");
    break;
  }
  if (ch.norm_cap && !(*ch.norm_cap > 0.0)) fail("channel.D must be positive");
  if (config.batch && *config.batch < 1) fail("batch must be >= 1");
  return warnings;
}

namespace {

StochasticVector target_weights(const TopologySpec& topo)
{
  if (topo.r_mode == "random") return StochasticVector::random(topo.n, topo.r_seed);
  if (topo.r_mode == "explicit") {
    return StochasticVector(Eigen::Map<const Vector>(topo.r_explicit.data(), topo.n));
  }
  return StochasticVector::uniform(topo.n);
}

GeneratedData generate(const LossSpec& loss)
{
  switch (loss.kind) {
  case LossKind::linear_regression: return gen_linreg(loss.N, loss.d, loss.data_seed, loss.label_noise);
  case LossKind::logistic_regression_l2: return gen_logistic(loss.N, loss.d, loss.data_seed);
  case LossKind::quadratic_toy: return gen_quadratic_toy(loss.N, loss.d, loss.data_seed);
  }
  throw std::invalid_argument("unknown loss kind");
}

WeightSchedule build_topology(const TopologySpec& topo, const StochasticVector& r)
{
  WeightSchedule out = [&] {
    switch (topo.kind) {
    case TopologyKind::cycle: return make_cycle_fixed(r);
    case TopologyKind::gossip: return make_cyclic_gossip(r);
    case TopologyKind::erdos_renyi: return make_er_fixed(topo.n, topo.edge_prob, r, topo.c, topo.seed);
    case TopologyKind::custom: break;
    }
    throw std::invalid_argument("topology.kind 'custom' cannot be built from a config");
  }();
  return out;
}

LossyChannel build_channel(const ChannelSpec& ch, Index d)
{
  switch (ch.kind) {
  case ChannelKind::perfect: return LossyChannel::perfect();
  case ChannelKind::rand_k: return LossyChannel::rand_k(ch.k, d, *ch.norm_cap);
  case ChannelKind::quantizer: return LossyChannel::quantizer(ch.s, d, *ch.norm_cap);
  case ChannelKind::gaussian: {
    LossyChannel out = LossyChannel::gaussian(ch.zeta);
    out.norm_cap = ch.norm_cap;
    return out;
  }
  }
  return LossyChannel::perfect();
}

} // namespace

Problem build_problem(const RunConfig& config)
{
  validate(config);
  GeneratedData gen = generate(config.loss);
  LossModel model{config.loss.kind, config.loss.reg, config.loss.condition};
  Partition part = partition(gen.data, target_weights(config.topology), config.loss.data_seed);
  // The realized fractions m_i/N are the stationary vector of the mixing matrices.
  const StochasticVector realized = part.weights;
  DistributedObjective objective(model, std::move(gen.data), std::move(part));
  return Problem{std::move(objective), build_topology(config.topology, realized),
                 build_channel(config.channel, config.loss.d), effective_schedule(config), config.batch};
}

namespace {

struct AgentFailure {
  bool failed = false;
  std::string message;
  std::exception_ptr error;
};

// Everything that changes from one step to the next, shared read-only by the agents.
struct StepContext {
  const RowMatrix& x;
  const Problem& problem;
  const Matrix& w;
  std::uint64_t seed;
  std::int64_t t;
  double alpha;
  double beta;
};

void update_agent(const StepContext& ctx, Index i, RowMatrix& out, StepTrace* trace,
                  AgentFailure& failure)
{
  try {
    const Vector xi = ctx.x.row(i).transpose();
    const Vector w_row = ctx.w.row(i).transpose();
    const Vector xhat = neighbor_estimate(ctx.x, w_row, ctx.problem.channel, i, ctx.t, ctx.seed);

    Vector grad;
    const auto& obj = ctx.problem.objective;
    if (ctx.problem.batch) {
      const Index m = static_cast<Index>(obj.part().assignments[static_cast<std::size_t>(i)].size());
      KeyedRng rng(ctx.seed, ctx.t, i, i, KeyedRng::Stream::minibatch);
      grad = obj.local_grad(i, xi, std::min(*ctx.problem.batch, m), rng);
    } else {
      grad = obj.local_grad(i, xi);
    }

    const Vector next = (1.0 - ctx.beta) * xi + ctx.beta * xhat - ctx.alpha * ctx.beta * grad;
    out.row(i) = next.transpose();

    if (trace) {
      trace->noise.row(i) = (xhat - ctx.x.transpose() * w_row).transpose();
      trace->grads.row(i) = grad.transpose();
    }

    const double norm_sq = next.squaredNorm();
    if (!std::isfinite(norm_sq) || norm_sq > divergence_threshold) {
      std::ostringstream msg;
      msg << "divergence at t=" << ctx.t << ", agent " << i << ": ||x_i||^2 = " << norm_sq;
      failure.failed = true;
      failure.message = msg.str();
    }
  } catch (...) {
    failure.error = std::current_exception();
  }
}

StepContext make_context(const StateMatrix& x, const Problem& problem, std::uint64_t seed)
{
  if (x.x.rows() != problem.objective.agents() || x.x.cols() != problem.objective.dim()) {
    throw std::invalid_argument("state shape does not match the problem");
  }
  if (x.t < 1) throw std::invalid_argument("state time must be >= 1");
  return {x.x, problem, problem.topology.matrix_at(x.t), seed, x.t,
          alpha_at(problem.steps, x.t), beta_at(problem.steps, x.t)};
}

void prepare_trace(StepTrace* trace, const StepContext& ctx)
{
  if (!trace) return;
  trace->noise.setZero(ctx.x.rows(), ctx.x.cols());
  trace->grads.setZero(ctx.x.rows(), ctx.x.cols());
  trace->alpha = ctx.alpha;
  trace->beta = ctx.beta;
}

// Reports the lowest-indexed failing agent so the outcome does not depend on scheduling.
void raise_failures(const std::vector<AgentFailure>& failures, std::int64_t t)
{
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (failures[i].error) std::rethrow_exception(failures[i].error);
    if (failures[i].failed) throw DivergenceError(t, static_cast<Index>(i), failures[i].message);
  }
}

} // namespace

StateMatrix dimix_step(const StateMatrix& x, const Problem& problem, std::uint64_t seed,
                       StepTrace* trace)
{
  const StepContext ctx = make_context(x, problem, seed);
  prepare_trace(trace, ctx);
  const Index n = x.x.rows();
  StateMatrix out{RowMatrix(n, x.x.cols()), x.t + 1};
  std::vector<AgentFailure> failures(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) update_agent(ctx, i, out.x, trace, failures[static_cast<std::size_t>(i)]);
  raise_failures(failures, x.t);
  return out;
}

StateMatrix dimix_step_serial(const StateMatrix& x, const Problem& problem, std::uint64_t seed,
                              StepTrace* trace)
{
  const StepContext ctx = make_context(x, problem, seed);
  prepare_trace(trace, ctx);
  const Index n = x.x.rows();
  StateMatrix out{RowMatrix(n, x.x.cols()), x.t + 1};
  std::vector<AgentFailure> failures(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) update_agent(ctx, i, out.x, trace, failures[static_cast<std::size_t>(i)]);
  raise_failures(failures, x.t);
  return out;
}

double average_dynamics_residual(const StateMatrix& before, const StateMatrix& after,
                                 const StepTrace& trace, const StochasticVector& r)
{
  const Vector xbar0 = weighted_average(before.x, r);
  const Vector xbar1 = weighted_average(after.x, r);
  const Vector noise = trace.noise.transpose() * r.entries();
  const Vector grad = trace.grads.transpose() * r.entries();
  return (xbar1 - (xbar0 + trace.beta * noise - trace.alpha * trace.beta * grad)).norm();
}

std::vector<std::int64_t> recording_times(std::int64_t T, std::int64_t stride)
{
  if (T < 1 || stride < 1) throw std::invalid_argument("recording needs T >= 1 and stride >= 1");
  std::vector<std::int64_t> times;
  for (std::int64_t t = 1; t <= T; t += stride) times.push_back(t);
  const double decades = std::log10(static_cast<double>(T));
  for (int q = 0; q <= static_cast<int>(std::ceil(20.0 * decades)); ++q) {
    const auto t = static_cast<std::int64_t>(std::llround(std::pow(10.0, q / 20.0)));
    if (t >= 1 && t <= T) times.push_back(t);
  }
  times.push_back(T);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

namespace {

TrajectoryRow measure(const StateMatrix& x, const Problem& problem)
{
  const Vector xbar = weighted_average(x.x, problem.r());
  const ValueGrad vg = problem.objective.global_value_grad(xbar);
  TrajectoryRow row;
  row.t = x.t;
  row.net_variance = network_variance(x.x, problem.r());
  row.grad_norm_sq_at_mean = vg.grad.squaredNorm();
  row.f_at_mean = vg.value;
  row.max_row_norm_sq = x.x.rowwise().squaredNorm().maxCoeff();
  row.alpha_t = alpha_at(problem.steps, x.t);
  row.beta_t = beta_at(problem.steps, x.t);
  return row;
}

} // namespace

RunResult run(const Problem& problem, const RunConfig& config, std::uint64_t seed)
{
  if (config.T < 1) throw std::invalid_argument("T must be >= 1");
  const std::vector<std::int64_t> times = recording_times(config.T, config.record_every);
  RunResult result;
  result.seed = seed;
  auto& traj = result.trajectory;
  if (config.dense_series) {
    traj.dense_grad_norm_sq.reserve(static_cast<std::size_t>(config.T));
    traj.dense_net_variance.reserve(static_cast<std::size_t>(config.T));
  }

  StateMatrix x = StateMatrix::zeros(problem.objective.agents(), problem.objective.dim());
  std::size_t next_record = 0;
  for (std::int64_t t = 1; t <= config.T; ++t) {
    const bool record = next_record < times.size() && times[next_record] == t;
    if (record || config.dense_series) {
      const TrajectoryRow row = measure(x, problem);
      result.max_row_norm_sq_seen = std::max(result.max_row_norm_sq_seen, row.max_row_norm_sq);
      if (config.dense_series) {
        traj.dense_grad_norm_sq.push_back(row.grad_norm_sq_at_mean);
        traj.dense_net_variance.push_back(row.net_variance);
      }
      if (record) {
        traj.rows.push_back(row);
        ++next_record;
      }
    } else {
      result.max_row_norm_sq_seen =
          std::max(result.max_row_norm_sq_seen, x.x.rowwise().squaredNorm().maxCoeff());
    }
    if (t == config.T) break;
    try {
      x = dimix_step(x, problem, seed);
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.diverged_at = e.t();
      result.diverged_agent = e.agent();
      result.divergence_message = e.what();
      break;
    }
  }
  if (problem.channel.norm_cap) result.norm_cap_exceeded = result.max_row_norm_sq_seen > *problem.channel.norm_cap;
  return result;
}

RunResult run(const RunConfig& config)
{
  const Problem problem = build_problem(config);
  return run(problem, config, config.seed);
}

std::vector<RunResult> run_many(const Problem& problem, const RunConfig& config)
{
  const int count = config.seeds;
  std::vector<RunResult> out(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
  for (int q = 0; q < count; ++q) {
    try {
      out[static_cast<std::size_t>(q)] = run(problem, config, config.seed + static_cast<std::uint64_t>(q));
    } catch (...) {
      errors[static_cast<std::size_t>(q)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<RunResult> run_many_serial(const Problem& problem, const RunConfig& config)
{
  std::vector<RunResult> out;
  for (int q = 0; q < config.seeds; ++q) {
    out.push_back(run(problem, config, config.seed + static_cast<std::uint64_t>(q)));
  }
  return out;
}

std::vector<double> mean_dense_grad_norm_sq(const std::vector<RunResult>& runs)
{
  if (runs.empty()) throw std::invalid_argument("no runs to average");
  const std::size_t len = runs.front().trajectory.dense_grad_norm_sq.size();
  if (len == 0) throw std::invalid_argument("runs carry no dense series");
  std::vector<double> mean(len, 0.0);
  for (const auto& r : runs) {
    if (r.diverged) throw std::invalid_argument("cannot average a diverged run");
    if (r.trajectory.dense_grad_norm_sq.size() != len) throw std::invalid_argument("dense series lengths differ");
    for (std::size_t t = 0; t < len; ++t) mean[t] += r.trajectory.dense_grad_norm_sq[t];
  }
  for (double& v : mean) v /= static_cast<double>(runs.size());
  return mean;
}

} // namespace dimix

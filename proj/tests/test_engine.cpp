#include <doctest.h>

#include "dimix/engine.hpp"
#include "dimix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace dimix;

namespace {

RowMatrix random_state(Index n, Index d, std::uint64_t seed)
{
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::test);
  std::normal_distribution<double> normal;
  RowMatrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

RunConfig small_config(TopologyKind kind, Index n, ChannelKind channel)
{
  RunConfig c;
  c.topology.kind = kind;
  c.topology.n = n;
  c.topology.r_mode = "random";
  c.topology.r_seed = 3;
  c.loss.kind = LossKind::linear_regression;
  c.loss.N = 60;
  c.loss.d = 4;
  c.loss.data_seed = 2;
  c.channel.kind = channel;
  c.channel.s = 3;
  c.channel.k = 2;
  c.channel.zeta = 0.1;
  if (channel == ChannelKind::quantizer || channel == ChannelKind::rand_k) c.channel.norm_cap = 100.0;
  c.schedule = {0.3, 0.2, 0.9, 0.4, 1.0};
  c.T = 50;
  c.record_every = 5;
  return c;
}

// A single-agent or identity-mixing problem around an existing one.
Problem with_topology(const Problem& p, std::vector<Matrix> period)
{
  return Problem{p.objective, WeightSchedule(TopologyKind::custom, p.r(), 1, std::move(period)), p.channel, p.steps,
                 p.batch};
}

Matrix local_grads(const Problem& p, const RowMatrix& x)
{
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) g.row(i) = p.objective.local_grad(i, x.row(i).transpose()).transpose();
  return g;
}

} // namespace

TEST_CASE("one step agrees with the matrix form")
{
  for (std::uint64_t q = 0; q < 5; ++q) {
    const Index n = 3 + static_cast<Index>(q % 3);
    const Problem p = build_problem(small_config(TopologyKind::gossip, n, ChannelKind::perfect));
    StateMatrix x{random_state(n, 4, q), 1};
    for (int step = 0; step < 50; ++step) {
      const double a = alpha_at(p.steps, x.t);
      const double b = beta_at(p.steps, x.t);
      const Matrix& w = p.topology.matrix_at(x.t);
      const Matrix expected = (1.0 - b) * Matrix(x.x) + b * w * Matrix(x.x) - a * b * local_grads(p, x.x);
      const StateMatrix next = dimix_step(x, p, 9);
      CHECK((Matrix(next.x) - expected).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
      CHECK(next.t == x.t + 1);
      x = next;
    }
  }
}

TEST_CASE("lossy step agrees with the matrix form plus the realized noise")
{
  const Problem p = build_problem(small_config(TopologyKind::cycle, 5, ChannelKind::quantizer));
  StateMatrix x{random_state(5, 4, 1), 7};
  StepTrace trace;
  const StateMatrix next = dimix_step(x, p, 4, &trace);
  const double a = trace.alpha;
  const double b = trace.beta;
  const Matrix expected =
      (1.0 - b) * Matrix(x.x) + b * (p.topology.matrix_at(7) * Matrix(x.x) + Matrix(trace.noise)) - a * b * local_grads(p, x.x);
  CHECK((Matrix(next.x) - expected).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(Matrix(trace.noise).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a single agent runs centralized gradient descent")
{
  const Problem base = build_problem(small_config(TopologyKind::cycle, 3, ChannelKind::perfect));
  GeneratedData gen = gen_linreg(40, 4, 5);
  LossModel model{LossKind::linear_regression, 0.0, 10.0};
  Partition part = partition(gen.data, StochasticVector::uniform(1), 0);
  const Problem p{DistributedObjective(model, gen.data, part),
            WeightSchedule(TopologyKind::custom, StochasticVector::uniform(1), 1, {Matrix::Ones(1, 1)}),
            LossyChannel::perfect(), base.steps, std::nullopt};
  StateMatrix x{RowMatrix::Zero(1, 4), 1};
  Vector y = Vector::Zero(4);
  for (int step = 0; step < 100; ++step) {
    const double eta = alpha_at(p.steps, x.t) * beta_at(p.steps, x.t);
    y -= eta * p.objective.global_value_grad(y).grad;
    x = dimix_step(x, p, 0);
  }
  CHECK((Vector(x.x.row(0).transpose()) - y).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("no gradient and no mixing is a fixed point")
{
  Problem p = with_topology(build_problem(small_config(TopologyKind::cycle, 4, ChannelKind::perfect)),
                            {Matrix::Identity(4, 4)});
  p.steps = {0.0, 0.0, 0.7, 0.3, 0.0};
  const RowMatrix start = random_state(4, 4, 3);
  StateMatrix x{start, 1};
  for (int step = 0; step < 200; ++step) x = dimix_step(x, p, 1);
  // (1 - beta) x + beta x only rounds.
  CHECK((Matrix(x.x) - Matrix(start)).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("average dynamics identity")
{
  SUBCASE("perfect channel")
  {
    const Problem p = build_problem(small_config(TopologyKind::erdos_renyi, 5, ChannelKind::perfect));
    StateMatrix x{random_state(5, 4, 2), 3};
    for (int step = 0; step < 30; ++step) {
      StepTrace trace;
      const StateMatrix next = dimix_step(x, p, 5, &trace);
      CHECK(Matrix(trace.noise).cwiseAbs().maxCoeff() <= 1e-15);
      CHECK(average_dynamics_residual(x, next, trace, p.r()) <= 1e-12);
      x = next;
    }
  }
  SUBCASE("lossy channels")
  {
    for (ChannelKind kind : {ChannelKind::quantizer, ChannelKind::rand_k, ChannelKind::gaussian}) {
      const Problem p = build_problem(small_config(TopologyKind::gossip, 4, kind));
      StateMatrix x{random_state(4, 4, 6), 1};
      for (int step = 0; step < 30; ++step) {
        StepTrace trace;
        const StateMatrix next = dimix_step(x, p, 8, &trace);
        CHECK(average_dynamics_residual(x, next, trace, p.r()) <= 1e-10);
        x = next;
      }
    }
  }
  SUBCASE("no gradient: the mean moves by beta r^T E only")
  {
    Problem p = build_problem(small_config(TopologyKind::cycle, 6, ChannelKind::quantizer));
    p.steps.alpha0 = 0.0;
    StateMatrix x{random_state(6, 4, 7), 2};
    StepTrace trace;
    const StateMatrix next = dimix_step(x, p, 3, &trace);
    const Vector moved = weighted_average(next.x, p.r()) - weighted_average(x.x, p.r());
    const Vector expected = trace.beta * (Matrix(trace.noise).transpose() * p.r().entries());
    CHECK((moved - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("pure averaging reaches consensus on a ring")
{
  Problem p = build_problem(small_config(TopologyKind::cycle, 10, ChannelKind::perfect));
  p.steps = {0.0, 0.0, 0.5, 0.0, 0.0};
  StateMatrix x{random_state(10, 4, 1), 1};
  const Vector mean0 = weighted_average(x.x, p.r());
  CHECK(network_variance(x.x, p.r()) > 0.1);
  for (int t = 1; t < 2000; ++t) x = dimix_step(x, p, 0);
  CHECK(network_variance(x.x, p.r()) < 1e-6);
  // r^T W = r^T keeps the weighted mean fixed.
  CHECK((weighted_average(x.x, p.r()) - mean0).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("constant beta with a perfect channel is averaging-based gradient descent")
{
  Problem p = build_problem(small_config(TopologyKind::cycle, 5, ChannelKind::perfect));
  p.steps = {0.3, 0.25, 0.6, 0.0, 2.0};
  const Matrix w = p.topology.matrix_at(1);
  const Matrix a = 0.4 * Matrix::Identity(5, 5) + 0.6 * w;
  StateMatrix x = StateMatrix::zeros(5, 4);
  Matrix y = Matrix::Zero(5, 4);
  for (int step = 0; step < 200; ++step) {
    const double step_size = alpha_at(p.steps, x.t) * 0.6;
    y = a * y - step_size * local_grads(p, y);
    x = dimix_step(x, p, 0);
  }
  CHECK((Matrix(x.x) - y).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("run records")
{
  SUBCASE("T = 1")
  {
    RunConfig c = small_config(TopologyKind::cycle, 4, ChannelKind::perfect);
    c.T = 1;
    const RunResult r = run(c);
    REQUIRE(r.trajectory.rows.size() == 1);
    CHECK(r.trajectory.rows[0].t == 1);
    CHECK(r.trajectory.rows[0].net_variance == 0.0);
    CHECK(r.trajectory.rows[0].max_row_norm_sq == 0.0);
    CHECK_FALSE(r.diverged);
  }
  SUBCASE("recording times")
  {
    const auto times = recording_times(1000, 100);
    CHECK(times.front() == 1);
    CHECK(times.back() == 1000);
    CHECK(std::is_sorted(times.begin(), times.end()));
    CHECK(std::find(times.begin(), times.end(), 501) != times.end());
    CHECK(std::find(times.begin(), times.end(), 562) != times.end()); // 10^{2.75}
    CHECK(recording_times(1, 10) == std::vector<std::int64_t>{1});
  }
  SUBCASE("dense series")
  {
    RunConfig c = small_config(TopologyKind::gossip, 4, ChannelKind::quantizer);
    c.T = 120;
    c.dense_series = true;
    const RunResult r = run(c);
    CHECK(r.trajectory.dense_grad_norm_sq.size() == 120);
    for (const auto& row : r.trajectory.rows) {
      CHECK(r.trajectory.dense_grad_norm_sq[static_cast<std::size_t>(row.t - 1)] == row.grad_norm_sq_at_mean);
      CHECK(row.alpha_t == alpha_at(c.schedule, row.t));
    }
  }
}

TEST_CASE("runs are deterministic and thread-count independent")
{
  RunConfig c = small_config(TopologyKind::erdos_renyi, 8, ChannelKind::quantizer);
  c.T = 300;
  c.batch = 3;
  c.seeds = 4;
  c.dense_series = true;
  const Problem p = build_problem(c);

  StateMatrix x{random_state(8, 4, 3), 5};
  StepTrace ta;
  StepTrace tb;
  const StateMatrix par = dimix_step(x, p, 2, &ta);
  const StateMatrix ser = dimix_step_serial(x, p, 2, &tb);
  CHECK(par.x == ser.x);
  CHECK(ta.noise == tb.noise);

#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
#endif
  const auto parallel = run_many(p, c);
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  const auto serial = run_many_serial(p, c);
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
  REQUIRE(parallel.size() == 4);
  for (std::size_t q = 0; q < 4; ++q) {
    CHECK(parallel[q].seed == c.seed + q);
    CHECK(parallel[q].trajectory.dense_grad_norm_sq == serial[q].trajectory.dense_grad_norm_sq);
    CHECK(parallel[q].trajectory.dense_net_variance == serial[q].trajectory.dense_net_variance);
  }
  CHECK(parallel[0].trajectory.dense_grad_norm_sq != parallel[1].trajectory.dense_grad_norm_sq);

  const RunResult again = run(p, c, c.seed + 2);
  CHECK(again.trajectory.dense_grad_norm_sq == parallel[2].trajectory.dense_grad_norm_sq);
  const auto mean = mean_dense_grad_norm_sq(parallel);
  CHECK(mean[10] == doctest::Approx((parallel[0].trajectory.dense_grad_norm_sq[10] +
                                     parallel[1].trajectory.dense_grad_norm_sq[10] +
                                     parallel[2].trajectory.dense_grad_norm_sq[10] +
                                     parallel[3].trajectory.dense_grad_norm_sq[10]) / 4.0));
}

TEST_CASE("divergence is detected and reported")
{
  RunConfig c;
  c.loss.kind = LossKind::quadratic_toy;
  c.topology.n = 4;
  c.schedule = {1000.0, 0.0, 0.5, 0.0, 0.0};
  c.T = 200;
  const RunResult r = run(c);
  CHECK(r.diverged);
  CHECK(r.diverged_at > 1);
  CHECK(r.diverged_at < 200);
  CHECK(r.diverged_agent >= 0);
  CHECK(r.divergence_message.find("divergence") != std::string::npos);
  CHECK(r.trajectory.rows.back().t <= r.diverged_at);

  Problem p = build_problem(c);
  StateMatrix x{RowMatrix::Constant(4, 10, 1e7), 1};
  CHECK_THROWS_AS(dimix_step(x, p, 0), DivergenceError);
}

TEST_CASE("the norm cap is monitored")
{
  RunConfig c = small_config(TopologyKind::cycle, 4, ChannelKind::quantizer);
  c.channel.norm_cap = 1e-6;
  c.T = 30;
  const RunResult r = run(c);
  CHECK(r.norm_cap_exceeded);
  CHECK(r.max_row_norm_sq_seen > 1e-6);
  c.channel.norm_cap = 1e6;
  CHECK_FALSE(run(c).norm_cap_exceeded);
}

TEST_CASE("config validation")
{
  RunConfig c = small_config(TopologyKind::cycle, 4, ChannelKind::quantizer);
  c.channel.norm_cap.reset();
  CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("channel.D"), std::invalid_argument);
  c = small_config(TopologyKind::cycle, 4, ChannelKind::rand_k);
  c.channel.k = 9;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = small_config(TopologyKind::cycle, 4, ChannelKind::perfect);
  c.schedule.beta0 = 2.0;
  c.schedule.mu = 0.0;
  c.schedule.tau = 0.0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = small_config(TopologyKind::cycle, 2, ChannelKind::perfect);
  CHECK_THROWS_AS(build_problem(c), std::invalid_argument);
  c = small_config(TopologyKind::cycle, 4, ChannelKind::perfect);
  c.mode = StepMode::fixed;
  CHECK(effective_schedule(c) == fixed_step_mode(c.fixed_alpha, c.fixed_beta));
}

#include "dimix/theory.hpp"

#include "dimix/rng.hpp"
#include "dimix/schedules.hpp"
#include "dimix/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace dimix {

bool TheoryReport::pass() const
{
  return !lemmas.empty() && std::all_of(lemmas.begin(), lemmas.end(), [](const LemmaResult& l) { return l.pass; });
}

namespace {

using Stream = KeyedRng::Stream;

double relative_gap(const InequalityCheck& c)
{
  return (c.lhs - c.rhs) / std::max(std::abs(c.rhs), 1.0);
}

// Rounding slack for inequalities evaluated in floating point.
bool holds_numerically(const InequalityCheck& c)
{
  return c.lhs <= c.rhs * (1.0 + 1e-12) + 1e-300;
}

Matrix gaussian_matrix(Index rows, Index cols, KeyedRng& rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

LemmaResult young_suite(std::uint64_t seed)
{
  LemmaResult out{"young_inequality", 0, -std::numeric_limits<double>::infinity(), true, {}};
  for (int q = 0; q < 200; ++q) {
    KeyedRng rng(seed, q, 0, 0, Stream::test);
    std::uniform_int_distribution<int> dim(1, 10);
    const double omega = 5.0 * (1.0 - rng.uniform01()); // (0, 5]
    InequalityCheck c;
    if (q % 2 == 0) {
      const Index d = dim(rng);
      const Vector u = gaussian_matrix(d, 1, rng).col(0);
      const Vector v = gaussian_matrix(d, 1, rng).col(0);
      c = young_inequality_check(u, v, omega);
    } else {
      const Index n = dim(rng);
      const Index d = dim(rng);
      const StochasticVector r = StochasticVector::random(n, seed + 7919u * static_cast<std::uint64_t>(q));
      c = young_inequality_check(gaussian_matrix(n, d, rng), gaussian_matrix(n, d, rng), r, omega);
    }
    out.max_violation = std::max(out.max_violation, relative_gap(c));
    out.pass = out.pass && holds_numerically(c);
    ++out.draws;
  }
  return out;
}

LemmaResult mixed_norm_suite(std::uint64_t seed)
{
  LemmaResult out{"mixed_norm", 0, -std::numeric_limits<double>::infinity(), true, {}};
  for (int q = 0; q < 200; ++q) {
    KeyedRng rng(seed, q, 1, 0, Stream::test);
    std::uniform_int_distribution<int> dim(1, 8);
    const Index n = dim(rng);
    const Index m = dim(rng);
    const Index d = dim(rng);
    const StochasticVector r = StochasticVector::random(n, seed + 104729u * static_cast<std::uint64_t>(q));
    const InequalityCheck c = mixed_norm_check(gaussian_matrix(n, m, rng), gaussian_matrix(m, d, rng), r);
    out.max_violation = std::max(out.max_violation, relative_gap(c));
    out.pass = out.pass && holds_numerically(c);
    ++out.draws;
  }
  return out;
}

LemmaResult telescoping_suite(std::uint64_t seed)
{
  LemmaResult out{"telescoping_identity", 0, 0.0, true, {}};
  constexpr double tolerance = 1e-10;
  for (int q = 0; q < 100; ++q) {
    KeyedRng rng(seed, q, 2, 0, Stream::test);
    const double lambda = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 0.0)(rng));
    const std::int64_t len = std::uniform_int_distribution<std::int64_t>(2, 200)(rng);
    std::vector<double> beta(static_cast<std::size_t>(len));
    for (double& b : beta) b = rng.uniform01();
    const std::int64_t t = std::uniform_int_distribution<std::int64_t>(2, len)(rng);
    const std::int64_t s = std::uniform_int_distribution<std::int64_t>(1, len)(rng);
    const double res = std::max(telescoping_identity_residual(beta, lambda, t),
                                tail_sum_identity_residual(beta, lambda, s, len));
    out.max_violation = std::max(out.max_violation, res);
    out.pass = out.pass && res <= tolerance;
    ++out.draws;
  }
  out.details["tolerance"] = tolerance;
  return out;
}

LemmaResult power_sum_suite(std::uint64_t seed)
{
  LemmaResult out{"power_sum_bound", 0, -std::numeric_limits<double>::infinity(), true, {}};
  for (int q = 0; q < 100; ++q) {
    KeyedRng rng(seed, q, 3, 0, Stream::test);
    const double delta = std::uniform_real_distribution<double>(-3.0, 2.0)(rng);
    const double tau = std::uniform_real_distribution<double>(0.5, 50.0)(rng);
    const auto T = static_cast<std::int64_t>(std::llround(std::pow(10.0, 4.0 * rng.uniform01())));
    const PowerSumBound b = power_sum_bound(delta, tau, std::max<std::int64_t>(T, 1));
    const InequalityCheck c{b.sum, b.bound};
    out.max_violation = std::max(out.max_violation, relative_gap(c));
    out.pass = out.pass && holds_numerically(c);
    ++out.draws;
  }
  return out;
}

WeightSchedule with_broken_stationarity(const WeightSchedule& s)
{
  const Index n = s.size();
  Matrix sink = Matrix::Zero(n, n);
  sink.col(0).setOnes();
  std::vector<Matrix> period;
  for (std::size_t k = 0; k < s.period(); ++k) {
    period.push_back(0.5 * s.matrix_at(static_cast<std::int64_t>(k) + 1) + 0.5 * sink);
  }
  return WeightSchedule(TopologyKind::custom, s.r(), s.connectivity_window(), std::move(period));
}

std::vector<Matrix> contraction_inputs(std::uint64_t seed, std::int64_t instance, Index n)
{
  std::vector<Matrix> us;
  for (int q = 0; q < 10; ++q) {
    KeyedRng rng(seed, instance, 4, q, Stream::test);
    if (q < 5) {
      us.push_back(gaussian_matrix(n, 3, rng));
    } else {
      // One agent far from the rest: the hardest case for a wrong stationary vector.
      Matrix u = Matrix::Zero(n, 3);
      u.row(std::uniform_int_distribution<Index>(0, n - 1)(rng)) = gaussian_matrix(1, 3, rng);
      us.push_back(u);
    }
  }
  return us;
}

LemmaResult contraction_suite(std::uint64_t seed, const TheoryOptions& options)
{
  LemmaResult out{"contraction", 0, -std::numeric_limits<double>::infinity(), true, {}};
  out.details["instances"] = nlohmann::json::array();
  const ScheduleParams beta{0.1, 0.0, 0.8, 0.3, 0.0};
  const Index n = 5;
  const StochasticVector r = StochasticVector::random(n, seed);
  struct Instance {
    std::string name;
    WeightSchedule schedule;
    std::int64_t horizon;
  };
  std::vector<Instance> instances;
  instances.push_back({"cyclic_gossip", make_cyclic_gossip(r), options.contraction_horizon});
  instances.push_back({"cycle", make_cycle_fixed(r), std::min<std::int64_t>(options.contraction_horizon, 100)});
  if (options.break_stationarity) {
    for (auto& inst : instances) inst.schedule = with_broken_stationarity(inst.schedule);
  }

  std::int64_t index = 0;
  for (const auto& inst : instances) {
    const ContractionSweep sweep =
        contraction_sweep(inst.schedule, beta, contraction_inputs(seed, index++, n), inst.horizon);
    out.draws += sweep.pairs;
    out.max_violation = std::max(out.max_violation, sweep.max_violation);
    out.pass = out.pass && sweep.holds;
    out.details["instances"].push_back({{"topology", inst.name},
                                        {"n", n},
                                        {"B", inst.schedule.connectivity_window()},
                                        {"eta", inst.schedule.eta()},
                                        {"lambda", sweep.lambda},
                                        {"kappa", sweep.kappa},
                                        {"t_max", inst.horizon},
                                        {"checks", sweep.pairs},
                                        {"max_ratio", sweep.max_ratio},
                                        {"holds", sweep.holds}});
  }
  out.details["beta"] = {{"beta0", beta.beta0}, {"mu", beta.mu}};
  out.details["stationarity_broken"] = options.break_stationarity;
  return out;
}

} // namespace

TheoryReport run_theory_checks(std::uint64_t seed, const TheoryOptions& options)
{
  TheoryReport report;
  report.seed = seed;
  report.lemmas.push_back(young_suite(seed));
  report.lemmas.push_back(telescoping_suite(seed));
  report.lemmas.push_back(power_sum_suite(seed));
  report.lemmas.push_back(mixed_norm_suite(seed));
  report.lemmas.push_back(contraction_suite(seed, options));
  return report;
}

nlohmann::json to_json(const TheoryReport& report)
{
  nlohmann::json j;
  j["seed"] = report.seed;
  j["pass"] = report.pass();
  j["lemmas"] = nlohmann::json::array();
  for (const auto& l : report.lemmas) {
    nlohmann::json e = {{"name", l.name}, {"draws", l.draws}, {"max_violation", l.max_violation}, {"pass", l.pass}};
    for (const auto& item : l.details.items()) e[item.key()] = item.value();
    j["lemmas"].push_back(e);
  }
  return j;
}

} // namespace dimix

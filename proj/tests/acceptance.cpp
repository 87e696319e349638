// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   acceptance [--criterion N]

#include "dimix/config.hpp"
#include "dimix/engine.hpp"
#include "dimix/lossy.hpp"
#include "dimix/metrics.hpp"
#include "dimix/theory.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <sys/wait.h>

using namespace dimix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Lemma suites

Outcome lemma_suites()
{
  const TheoryReport report = run_theory_checks(0);
  std::string s;
  for (const auto& l : report.lemmas) {
    s += l.name + (l.pass ? " ok" : " FAILED") + " (" + std::to_string(l.draws) + " checks, max violation " +
         fmt(l.max_violation) + "); ";
  }
  return {report.pass(), s};
}

// ---------------------------------------------------------------------------
// 2. Channel statistics

struct ChannelStats {
  bool unbiased = true;
  double second_moment = 0.0; // mean ||out - x||^2
};

ChannelStats channel_stats(const Vector& x, const std::function<Vector(KeyedRng&)>& draw)
{
  constexpr int m = 100000;
  const Index d = x.size();
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  ChannelStats out;
  for (int k = 0; k < m; ++k) {
    KeyedRng rng(2024, k, 0, 0, KeyedRng::Stream::test);
    const Vector y = draw(rng);
    sum += y;
    sum_sq += y.cwiseProduct(y);
    out.second_moment += (y - x).squaredNorm() / m;
  }
  const Vector mean = sum / m;
  const Vector var = (sum_sq / m - mean.cwiseProduct(mean)) * (static_cast<double>(m) / (m - 1));
  for (Index l = 0; l < d; ++l) {
    const double se = std::sqrt(std::max(var[l], 0.0) / m);
    out.unbiased = out.unbiased && std::abs(mean[l] - x[l]) <= 4.0 * se + 1e-15;
  }
  return out;
}

Vector unit_vector(Index d, std::uint64_t seed)
{
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::test);
  std::normal_distribution<double> normal;
  Vector x(d);
  for (Index l = 0; l < d; ++l) x[l] = normal(rng);
  return x / x.norm();
}

Outcome channel_statistics()
{
  bool pass = true;
  std::string s;
  auto record = [&](const std::string& name, const ChannelStats& st, double gamma) {
    const bool ok = st.unbiased && st.second_moment <= 1.05 * gamma;
    pass = pass && ok;
    s += name + ": E||e||^2=" + fmt(st.second_moment) + " bound " + fmt(gamma) +
         (st.unbiased ? " unbiased" : " BIASED") + (ok ? "; " : " FAILED; ");
  };

  const Vector ones = Vector::Ones(8);
  record("rand_k(d=8,k=2)", channel_stats(ones, [&](KeyedRng& r) { return rand_k_sparsify(ones, 2, r); }),
         gamma_for(ChannelKind::rand_k, 2, 0, 0.0, 8, ones.squaredNorm()));
  for (int s_levels : {3, 6}) {
    const Vector u = unit_vector(16, 7 + static_cast<std::uint64_t>(s_levels));
    record("quantizer(d=16,s=" + std::to_string(s_levels) + ")",
           channel_stats(u, [&](KeyedRng& r) { return stochastic_quantize(u, s_levels, r); }),
           gamma_for(ChannelKind::quantizer, 0, s_levels, 0.0, 16, 1.0));
  }
  const Vector zero = Vector::Zero(10);
  record("gaussian(zeta=1)", channel_stats(zero, [&](KeyedRng& r) { return gaussian_corrupt(zero, 1.0, r); }),
         gamma_for(ChannelKind::gaussian, 0, 0, 1.0, 10, std::nullopt));
  return {pass, s};
}

// ---------------------------------------------------------------------------
// 3. Exact identities

RowMatrix random_rows(Index n, Index d, std::uint64_t seed)
{
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::test);
  std::normal_distribution<double> normal;
  RowMatrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

RunConfig identity_config(TopologyKind kind, Index n, Index d, ChannelKind channel)
{
  RunConfig c;
  c.loss = {LossKind::linear_regression, 80, d, 0.0, 10.0, 0.1, 3};
  c.topology.kind = kind;
  c.topology.n = n;
  c.topology.r_mode = "random";
  c.topology.r_seed = 5;
  c.channel.kind = channel;
  c.channel.s = 3;
  c.channel.norm_cap = 100.0;
  c.schedule = {0.3, 0.2, 0.9, 0.4, 1.0};
  return c;
}

Outcome exact_identities()
{
  // Per-agent update against (1 - b) X + b W X - a b grad F(X).
  double matrix_gap = 0.0;
  for (std::uint64_t q = 0; q < 6; ++q) {
    const Index n = 3 + static_cast<Index>(q % 3);
    const Index d = 2 + static_cast<Index>(q % 3);
    const TopologyKind kind = q % 2 ? TopologyKind::gossip : TopologyKind::cycle;
    const Problem p = build_problem(identity_config(kind, n, d, ChannelKind::perfect));
    StateMatrix x{random_rows(n, d, q), 1};
    for (int step = 0; step < 50; ++step) {
      const double a = alpha_at(p.steps, x.t);
      const double b = beta_at(p.steps, x.t);
      Matrix g(n, d);
      for (Index i = 0; i < n; ++i) g.row(i) = p.objective.local_grad(i, x.x.row(i).transpose()).transpose();
      const Matrix expected = (1.0 - b) * Matrix(x.x) + b * p.topology.matrix_at(x.t) * Matrix(x.x) - a * b * g;
      x = dimix_step(x, p, q);
      matrix_gap = std::max(matrix_gap, (Matrix(x.x) - expected).cwiseAbs().maxCoeff());
    }
  }

  // Average dynamics along a quantized run.
  const Problem p = build_problem(identity_config(TopologyKind::gossip, 10, 20, ChannelKind::quantizer));
  StateMatrix x = StateMatrix::zeros(10, 20);
  double avg_gap = 0.0;
  for (int step = 0; step < 1000; ++step) {
    StepTrace trace;
    const StateMatrix next = dimix_step(x, p, 17, &trace);
    avg_gap = std::max(avg_gap, average_dynamics_residual(x, next, trace, p.r()));
    x = next;
  }

  // ||U||_r^2 = ||U - 1 r^T U||_r^2 + ||1 r^T U||_r^2.
  double pyth_gap = 0.0;
  for (std::uint64_t q = 0; q < 100; ++q) {
    const Index n = 2 + static_cast<Index>(q % 7);
    const auto r = StochasticVector::random(n, q);
    const Matrix u = random_rows(n, 3, 100 + q);
    const Matrix mean = Vector::Ones(n) * (r.entries().transpose() * u);
    const double lhs = std::pow(r_norm(u, r), 2);
    const double rhs = std::pow(r_norm(u - mean, r), 2) + std::pow(r_norm(mean, r), 2);
    pyth_gap = std::max(pyth_gap, std::abs(lhs - rhs));
  }

  const bool pass = matrix_gap <= 1e-14 && avg_gap <= 1e-10 && pyth_gap <= 1e-10;
  return {pass, "matrix form gap " + fmt(matrix_gap) + " (<= 1e-14), average-dynamics residual " + fmt(avg_gap) +
                    " (<= 1e-10), Pythagorean gap " + fmt(pyth_gap) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------------------
// 4. Consensus contrast

Outcome consensus_contrast()
{
  const auto runs = expand_preset("paper-3.1-fixed-vs-diminishing");
  std::vector<RunResult> results;
  for (auto run_cfg : runs) {
    run_cfg.config.dense_series = true;
    results.push_back(run(run_cfg.config));
  }
  const RunResult& dim = results[0];
  const RunResult& fix = results[1];
  if (dim.diverged || fix.diverged) return {false, "a run diverged: " + dim.divergence_message + fix.divergence_message};

  auto tail_mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t t = v.size() - 100; t < v.size(); ++t) s += v[t];
    return s / 100.0;
  };
  const double dim_tail = tail_mean(dim.trajectory.dense_net_variance);
  const double fix_tail = tail_mean(fix.trajectory.dense_net_variance);
  const double v500 = dim.trajectory.dense_net_variance[499];
  const double vT = dim.trajectory.dense_net_variance.back();
  const bool below = dim_tail < fix_tail;
  const bool decayed = vT < 0.1 * v500;
  return {below && decayed, "final-100 mean variance: diminishing " + fmt(dim_tail) + " vs fixed " + fmt(fix_tail) +
                                (below ? " (ok)" : " (FAILED)") + "; diminishing v(T)/v(500) = " + fmt(vT / v500) +
                                (decayed ? " (ok, < 0.1)" : " (FAILED, needs < 0.1)")};
}

// ---------------------------------------------------------------------------
// 5-6. Rate slopes

struct SlopeResult {
  double slope = 0.0;
  bool diverged = false;
};

SlopeResult rate_slope(double nu, double mu)
{
  const RunConfig c = rate_study_base(TopologyKind::gossip, nu, mu);
  const Problem p = build_problem(c);
  const auto runs = run_many(p, c);
  SlopeResult out;
  for (const auto& r : runs) out.diverged = out.diverged || r.diverged;
  if (out.diverged) return out;
  const std::vector<double> m1 = running_mean(mean_dense_grad_norm_sq(runs));
  std::vector<std::pair<double, double>> series;
  for (std::int64_t t : recording_times(c.T, c.T)) {
    if (t >= 1000) series.emplace_back(static_cast<double>(t), m1[static_cast<std::size_t>(t - 1)]);
  }
  out.slope = fit_rate(series, 1e3, 1e5).fitted_slope;
  return out;
}

Outcome rate_upper_bound()
{
  const SlopeResult r = rate_slope(1.0 / 6.0, 0.5);
  const double limit = -(1.0 / 3.0 - 0.05);
  const bool pass = !r.diverged && r.slope <= limit;
  return {pass, r.diverged ? "run diverged" : "M_1 slope over [1e3, 1e5] = " + fmt(r.slope) + " (needs <= " + fmt(limit) + ")"};
}

Outcome exponent_regions()
{
  struct Point {
    double nu, mu, exact;
  };
  // Exponents worked out by hand: 0.2 = 2nu = 1 - nu - mu, then mu - nu twice.
  const Point points[] = {{0.1, 0.7, 0.2}, {0.3, 0.45, 0.15}, {0.1, 0.25, 0.15}};
  bool pass = true;
  std::string s;
  for (const auto& pt : points) {
    const PredictedExponent e = predicted_exponent(pt.nu, pt.mu);
    const bool exact = std::abs(e.exponent - pt.exact) <= 1e-15;
    const SlopeResult r = rate_slope(pt.nu, pt.mu);
    const double limit = -(e.exponent - 0.08);
    const bool ok = exact && !r.diverged && r.slope <= limit;
    pass = pass && ok;
    s += "(" + fmt(pt.nu) + "," + fmt(pt.mu) + "): exponent " + fmt(e.exponent) + (exact ? "" : " MISMATCH") +
         ", slope " + (r.diverged ? std::string("diverged") : fmt(r.slope)) + " (needs <= " + fmt(limit) + ")" +
         (ok ? "; " : " FAILED; ");
  }
  return {pass, s};
}

// ---------------------------------------------------------------------------
// 7. Fixed ring vs cyclic gossip

Outcome topology_ordering()
{
  double f[2] = {0.0, 0.0};
  int k = 0;
  for (TopologyKind kind : {TopologyKind::cycle, TopologyKind::gossip}) {
    RunConfig c = rate_study_base(kind, 1.0 / 6.0, 0.5);
    c.T = 20000;
    c.dense_series = false;
    const auto runs = run_many(build_problem(c), c);
    for (const auto& r : runs) {
      if (r.diverged) return {false, "run diverged: " + r.divergence_message};
      f[k] += r.trajectory.rows.back().f_at_mean / static_cast<double>(runs.size());
    }
    ++k;
  }
  return {f[0] <= f[1], "mean f(xbar(T)) at T = 2e4: cycle " + fmt(f[0]) + ", gossip " + fmt(f[1])};
}

// ---------------------------------------------------------------------------
// 8. Byte-identical preset output across thread counts

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism()
{
  const std::string preset = "paper-3.2-linreg-gossip";
  const fs::path root = fs::temp_directory_path() / "dimix_acceptance_determinism";
  fs::remove_all(root);
  int status[2];
  int q = 0;
  for (int threads : {1, 4}) {
    const fs::path out = root / ("threads" + std::to_string(threads));
    const std::string cmd = std::string(DIMIX_CLI_PATH) + " --threads " + std::to_string(threads) + " preset " +
                            preset + " --seed 7 --out " + out.string() + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    status[q++] = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }
  if (status[0] != 0 || status[1] != 0) return {false, "preset run failed"};
  std::size_t compared = 0;
  bool same = true;
  for (const auto& e : fs::recursive_directory_iterator(root / "threads1")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const fs::path other = root / "threads4" / fs::relative(e.path(), root / "threads1");
    same = same && fs::exists(other) && slurp(e.path()) == slurp(other);
    ++compared;
  }
  fs::remove_all(root);
  const bool pass = same && compared > 0;
  return {pass, preset + ": " + std::to_string(compared) + " CSV file(s) compared across 1 and 4 threads, " +
                    (same ? "identical" : "DIFFERENT")};
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"DIMIX acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"lemma suites", lemma_suites},
      {"channel statistics", channel_statistics},
      {"exact identities", exact_identities},
      {"consensus contrast", consensus_contrast},
      {"rate upper bound", rate_upper_bound},
      {"exponent regions", exponent_regions},
      {"fixed vs time-varying topology", topology_ordering},
      {"determinism", determinism},
  };

  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (only != 0 && id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first << ", "
              << fmt(secs) << " s): " << o.summary << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

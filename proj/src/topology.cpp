#include "dimix/topology.hpp"

#include "dimix/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace dimix {

// ---------------------------------------------------------------------------
// StochasticVector

StochasticVector::StochasticVector(Vector entries) : entries_(std::move(entries))
{
  if (entries_.size() < 1) throw std::invalid_argument("stochastic vector must be non-empty");
  for (Index i = 0; i < entries_.size(); ++i) {
    if (!(entries_[i] > 0.0) || !std::isfinite(entries_[i])) {
      throw std::invalid_argument("stochastic vector entries must be strictly positive");
    }
  }
  if (std::abs(entries_.sum() - 1.0) > tolerance) {
    throw std::invalid_argument("stochastic vector entries must sum to 1");
  }
}

StochasticVector StochasticVector::uniform(Index n)
{
  return StochasticVector(Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

StochasticVector StochasticVector::random(Index n, std::uint64_t seed, double lo, double hi)
{
  if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("random weights need 0 < lo < hi");
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::topology);
  Vector p(n);
  for (Index i = 0; i < n; ++i) p[i] = lo + (hi - lo) * rng.uniform01();
  return StochasticVector(p / p.sum());
}

// ---------------------------------------------------------------------------
// WeightMatrix

WeightMatrixReport check_weight_matrix(const WeightMatrix& w, const StochasticVector& r, double tol)
{
  WeightMatrixReport rep;
  const Matrix& m = w.entries;
  if (m.rows() != r.size() || m.cols() != r.size()) return rep;
  rep.min_entry = m.minCoeff();
  rep.row_sum_error = (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
  rep.stationarity_error = ((r.entries().transpose() * m) - r.entries().transpose()).cwiseAbs().maxCoeff();
  rep.min_nonzero = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) > 0.0) rep.min_nonzero = std::min(rep.min_nonzero, m(i, j));
    }
  }
  rep.valid = rep.min_entry >= 0.0 && rep.row_sum_error <= tol && rep.stationarity_error <= tol &&
              rep.min_nonzero >= w.eta && w.eta > 0.0;
  return rep;
}

std::string to_string(TopologyKind kind)
{
  switch (kind) {
  case TopologyKind::cycle: return "cycle";
  case TopologyKind::gossip: return "gossip";
  case TopologyKind::erdos_renyi: return "erdos_renyi";
  case TopologyKind::custom: return "custom";
  }
  return "custom";
}

TopologyKind topology_kind_from_string(const std::string& name)
{
  if (name == "cycle") return TopologyKind::cycle;
  if (name == "gossip") return TopologyKind::gossip;
  if (name == "erdos_renyi") return TopologyKind::erdos_renyi;
  if (name == "custom") return TopologyKind::custom;
  throw std::invalid_argument("unknown topology kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// WeightSchedule

WeightSchedule::WeightSchedule(TopologyKind kind, StochasticVector r, int connectivity_window,
                               std::vector<Matrix> period)
    : kind_(kind), r_(std::move(r)), window_(connectivity_window), period_(std::move(period)),
      eta_(std::numeric_limits<double>::infinity())
{
  if (period_.empty()) throw std::invalid_argument("weight schedule needs at least one matrix");
  if (window_ < 1) throw std::invalid_argument("connectivity window B must be >= 1");
  for (const Matrix& m : period_) {
    if (m.rows() != r_.size() || m.cols() != r_.size()) {
      throw std::invalid_argument("mixing matrix dimension does not match r");
    }
    for (Index i = 0; i < m.size(); ++i) {
      const double v = m.data()[i];
      if (v > 0.0) eta_ = std::min(eta_, v);
    }
  }
}

const Matrix& WeightSchedule::matrix_at(std::int64_t t) const
{
  if (t < 1) throw std::invalid_argument("mixing matrices are indexed from t = 1");
  return period_[static_cast<std::size_t>((t - 1) % static_cast<std::int64_t>(period_.size()))];
}

namespace {

// <i> = ((i-1) mod n) + 1, returned 0-based.
Index ring(std::int64_t i, Index n)
{
  const std::int64_t m = ((i - 1) % n + n) % n;
  return static_cast<Index>(m);
}

} // namespace

WeightSchedule make_cycle_fixed(const StochasticVector& r)
{
  const Index n = r.size();
  if (n < 3) throw std::invalid_argument("cycle topology needs n >= 3");
  Matrix w = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index prev = ring(i, n);     // <i-1> in 1-based terms
    const Index next = ring(i + 2, n); // <i+1>
    w(i, prev) = r[prev] / (2.0 * (r[i] + r[prev]));
    w(i, next) = r[next] / (2.0 * (r[i] + r[next]));
    w(i, i) = r[i] / (2.0 * (r[i] + r[next])) + r[i] / (2.0 * (r[i] + r[prev]));
  }
  return WeightSchedule(TopologyKind::cycle, r, 1, {std::move(w)});
}

WeightSchedule make_cyclic_gossip(const StochasticVector& r)
{
  const Index n = r.size();
  if (n < 2) throw std::invalid_argument("cyclic gossip needs n >= 2");
  std::vector<Matrix> period;
  period.reserve(static_cast<std::size_t>(n));
  for (std::int64_t t = 1; t <= n; ++t) {
    const Index a = ring(t, n);
    const Index b = ring(t + 1, n);
    Matrix w = Matrix::Identity(n, n);
    const double denom = r[a] + r[b];
    for (Index i : {a, b}) {
      for (Index j : {a, b}) w(i, j) = r[j] / denom;
    }
    period.push_back(std::move(w));
  }
  return WeightSchedule(TopologyKind::gossip, r, static_cast<int>(n), std::move(period));
}

std::vector<std::vector<bool>> er_graph(Index n, double edge_prob, std::uint64_t seed)
{
  constexpr int max_attempts = 100;
  const auto un = static_cast<std::size_t>(n);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    KeyedRng rng(seed, attempt, 0, 0, KeyedRng::Stream::topology);
    std::vector<std::vector<bool>> adj(un, std::vector<bool>(un, false));
    for (std::size_t i = 0; i < un; ++i) {
      for (std::size_t j = i + 1; j < un; ++j) {
        if (rng.uniform01() < edge_prob) adj[i][j] = adj[j][i] = true;
      }
    }
    if (strongly_connected(adj)) return adj;
  }
  throw std::runtime_error("Erdos-Renyi graph still disconnected after 100 samples");
}

WeightSchedule make_er_fixed(Index n, double edge_prob, const StochasticVector& r, double c,
                             std::uint64_t seed)
{
  if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("c must lie in (0,1)");
  if (!(edge_prob > 0.0 && edge_prob < 1.0)) throw std::invalid_argument("edge_prob must lie in (0,1)");
  if (r.size() != n) throw std::invalid_argument("r has the wrong dimension");
  if (n < 2) throw std::invalid_argument("Erdos-Renyi topology needs n >= 2");

  const auto adj = er_graph(n, edge_prob, seed);
  Matrix laplacian = Matrix::Zero(n, n);
  double d_max = 0.0;
  for (Index i = 0; i < n; ++i) {
    double deg = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        laplacian(i, j) = -1.0;
        deg += 1.0;
      }
    }
    laplacian(i, i) = deg;
    d_max = std::max(d_max, deg);
  }
  const Matrix identity = Matrix::Identity(n, n);
  const Matrix a = identity - laplacian / (d_max + 1.0);

  double rhat_min = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) rhat_min = std::min(rhat_min, r[i] / (1.0 - a(i, i)));

  Matrix w = identity;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      w(i, j) = c * rhat_min / r[i] * a(i, j);
    }
    // Self weight as the complement keeps the row sum at 1 to rounding.
    w(i, i) = 1.0 - (w.row(i).sum() - w(i, i));
  }

  WeightSchedule out(TopologyKind::erdos_renyi, r, 1, {std::move(w)});
  out.seed = seed;
  out.edge_prob = edge_prob;
  out.c = c;
  return out;
}

// ---------------------------------------------------------------------------
// Mixing products and norms

WeightMatrix effective_mixing(const WeightMatrix& w, double beta)
{
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0,1]");
  const Index n = w.entries.rows();
  WeightMatrix a;
  a.entries = beta * w.entries;
  a.entries.diagonal().array() += (1.0 - beta);
  // Off-diagonal weights shrink with beta, so eta is recomputed rather than inherited.
  a.eta = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n * n; ++i) {
    const double v = a.entries.data()[i];
    if (v > 0.0) a.eta = std::min(a.eta, v);
  }
  return a;
}

double r_norm(const Matrix& m, const StochasticVector& r)
{
  if (m.rows() != r.size()) throw std::invalid_argument("r_norm: row count does not match r");
  return std::sqrt((r.entries().array() * m.rowwise().squaredNorm().array()).sum());
}

TransitionProduct transition_product(const WeightSchedule& schedule, std::span<const double> beta,
                                     std::int64_t s, std::int64_t t)
{
  if (s < 1) throw std::invalid_argument("transition product needs s >= 1");
  if (s >= t) throw std::invalid_argument("transition product needs s < t");
  if (static_cast<std::int64_t>(beta.size()) < t - 1) {
    throw std::invalid_argument("beta sequence shorter than t-1");
  }
  const Index n = schedule.size();
  TransitionProduct out{Matrix::Identity(n, n), s, t};
  for (std::int64_t k = s + 1; k <= t - 1; ++k) {
    const WeightMatrix a = effective_mixing(schedule.at(k), beta[static_cast<std::size_t>(k - 1)]);
    out.matrix = a.entries * out.matrix;
  }
  return out;
}

double contraction_rate(const WeightSchedule& schedule)
{
  const auto n = static_cast<double>(schedule.size());
  return schedule.eta() * schedule.r().min() / (2.0 * schedule.connectivity_window() * n * n);
}

double contraction_kappa(const WeightSchedule& schedule, double beta1)
{
  const double x = schedule.connectivity_window() * contraction_rate(schedule) * beta1;
  if (!(x < 1.0)) throw std::domain_error("kappa undefined: B * lambda * beta(1) >= 1");
  return 1.0 / (1.0 - x);
}

namespace {

Matrix consensus_projector(const StochasticVector& r)
{
  const Index n = r.size();
  return Vector::Ones(n) * r.entries().transpose();
}

} // namespace

InequalityCheck contraction_check(const WeightSchedule& schedule, const ScheduleParams& beta_params,
                                  const Matrix& u, std::int64_t s, std::int64_t t)
{
  const auto beta = beta_sequence(beta_params, t);
  const TransitionProduct phi = transition_product(schedule, beta, s, t);
  const double lambda = contraction_rate(schedule);
  const double kappa = contraction_kappa(schedule, beta.front());

  RunningProduct decay;
  for (std::int64_t k = s + 1; k <= t - 1; ++k) decay.multiply(1.0 - lambda * beta[static_cast<std::size_t>(k - 1)]);

  const Matrix dev = (phi.matrix - consensus_projector(schedule.r())) * u;
  const double un = r_norm(u, schedule.r());
  const double dn = r_norm(dev, schedule.r());
  return {dn * dn, kappa * decay.value() * un * un};
}

ContractionSweep contraction_sweep(const WeightSchedule& schedule, const ScheduleParams& beta_params,
                                   const std::vector<Matrix>& us, std::int64_t t_max)
{
  ContractionSweep out;
  const auto beta = beta_sequence(beta_params, t_max);
  out.lambda = contraction_rate(schedule);
  out.kappa = contraction_kappa(schedule, beta.front());
  out.max_violation = -std::numeric_limits<double>::infinity();
  const Matrix proj = consensus_projector(schedule.r());
  const Index n = schedule.size();

  std::vector<double> u_norm_sq;
  u_norm_sq.reserve(us.size());
  for (const Matrix& u : us) {
    const double v = r_norm(u, schedule.r());
    u_norm_sq.push_back(v * v);
  }

  for (std::int64_t s = 1; s < t_max; ++s) {
    Matrix phi = Matrix::Identity(n, n); // Phi(s+1:s)
    RunningProduct decay;
    for (std::int64_t t = s + 1; t <= t_max; ++t) {
      if (t > s + 1) {
        const std::int64_t k = t - 1; // Phi(t:s) = A(t-1) Phi(t-1:s)
        const double bk = beta[static_cast<std::size_t>(k - 1)];
        phi = effective_mixing(schedule.at(k), bk).entries * phi;
        decay.multiply(1.0 - out.lambda * bk);
      }
      const Matrix dev_op = phi - proj;
      for (std::size_t q = 0; q < us.size(); ++q) {
        const double dn = r_norm(dev_op * us[q], schedule.r());
        const double lhs = dn * dn;
        const double rhs = out.kappa * decay.value() * u_norm_sq[q];
        out.max_violation = std::max(out.max_violation, lhs - rhs);
        if (rhs > 0.0) out.max_ratio = std::max(out.max_ratio, lhs / rhs);
        if (lhs > rhs) out.holds = false;
        ++out.pairs;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Connectivity

bool strongly_connected(const std::vector<std::vector<bool>>& adjacency)
{
  const std::size_t n = adjacency.size();
  if (n == 0) return false;
  // Strongly connected iff every vertex is reachable from vertex 0 both in
  // the graph and in its transpose (a single SCC).
  auto reaches_all = [&](bool transpose) {
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      for (std::size_t w = 0; w < n; ++w) {
        const bool edge = transpose ? adjacency[w][v] : adjacency[v][w];
        if (edge && !seen[w]) {
          seen[w] = true;
          ++count;
          q.push(w);
        }
      }
    }
    return count == n;
  };
  return reaches_all(false) && reaches_all(true);
}

bool check_b_connected(const WeightSchedule& schedule, std::int64_t t_start, int B)
{
  if (B < 1) return false;
  const auto n = static_cast<std::size_t>(schedule.size());
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::int64_t k = t_start + 1; k <= t_start + B; ++k) {
    const Matrix& w = schedule.matrix_at(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        // Edge (j, i): agent i listens to agent j.
        if (i != j && w(static_cast<Index>(i), static_cast<Index>(j)) > 0.0) adj[j][i] = true;
      }
    }
  }
  return strongly_connected(adj);
}

// ---------------------------------------------------------------------------
// Norm inequalities

InequalityCheck young_inequality_check(const Vector& u, const Vector& v, double omega)
{
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be > 0");
  if (u.size() != v.size()) throw std::invalid_argument("vector dimensions differ");
  return {(u + v).squaredNorm(), (1.0 + omega) * u.squaredNorm() + (1.0 + 1.0 / omega) * v.squaredNorm()};
}

InequalityCheck young_inequality_check(const Matrix& u, const Matrix& v, const StochasticVector& r,
                                       double omega)
{
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be > 0");
  if (u.rows() != v.rows() || u.cols() != v.cols()) throw std::invalid_argument("matrix dimensions differ");
  const double s = r_norm(u + v, r);
  const double a = r_norm(u, r);
  const double b = r_norm(v, r);
  return {s * s, (1.0 + omega) * a * a + (1.0 + 1.0 / omega) * b * b};
}

InequalityCheck mixed_norm_check(const Matrix& a, const Matrix& b, const StochasticVector& r)
{
  if (a.cols() != b.rows()) throw std::invalid_argument("mixed_norm_check: inner dimensions differ");
  return {r_norm(a * b, r), r_norm(a, r) * b.norm()};
}

// ---------------------------------------------------------------------------
// JSON description

nlohmann::json describe(const WeightSchedule& schedule)
{
  nlohmann::json j;
  j["kind"] = to_string(schedule.kind());
  j["n"] = schedule.size();
  const Vector& r = schedule.r().entries();
  j["r"] = std::vector<double>(r.data(), r.data() + r.size());
  j["B"] = schedule.connectivity_window();
  j["eta"] = schedule.eta();
  if (schedule.kind() == TopologyKind::erdos_renyi) {
    j["seed"] = schedule.seed;
    j["edge_prob"] = schedule.edge_prob;
    j["c"] = schedule.c;
  }
  return j;
}

WeightSchedule schedule_from_json(const nlohmann::json& j)
{
  const auto kind = topology_kind_from_string(j.at("kind").get<std::string>());
  const auto rv = j.at("r").get<std::vector<double>>();
  StochasticVector r(Eigen::Map<const Vector>(rv.data(), static_cast<Index>(rv.size())));
  switch (kind) {
  case TopologyKind::cycle: return make_cycle_fixed(r);
  case TopologyKind::gossip: return make_cyclic_gossip(r);
  case TopologyKind::erdos_renyi:
    return make_er_fixed(r.size(), j.at("edge_prob").get<double>(), r, j.at("c").get<double>(),
                         j.at("seed").get<std::uint64_t>());
  case TopologyKind::custom: break;
  }
  throw std::invalid_argument("custom schedules carry no reproducible description");
}

} // namespace dimix

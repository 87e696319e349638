#include "dimix/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dimix {

std::string to_string(LossKind kind)
{
  switch (kind) {
  case LossKind::linear_regression: return "linear_regression";
  case LossKind::logistic_regression_l2: return "logistic_regression_l2";
  case LossKind::quadratic_toy: return "quadratic_toy";
  }
  return "quadratic_toy";
}

LossKind loss_kind_from_string(const std::string& name)
{
  if (name == "linear_regression") return LossKind::linear_regression;
  if (name == "logistic_regression_l2") return LossKind::logistic_regression_l2;
  if (name == "quadratic_toy") return LossKind::quadratic_toy;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// Data generation

GeneratedData gen_linreg(Index N, Index d, std::uint64_t seed, double label_noise)
{
  if (N < 1 || d < 1) throw std::invalid_argument("gen_linreg needs N, d >= 1");
  if (!(label_noise >= 0.0)) throw std::invalid_argument("label noise must be >= 0");
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::data);
  GeneratedData out;
  out.truth.resize(d);
  for (Index k = 0; k < d; ++k) out.truth[k] = -1.0 + 2.0 * rng.uniform01();
  out.data.features.resize(N, d);
  out.data.labels.resize(N);
  out.data.seed = seed;
  for (Index i = 0; i < N; ++i) {
    for (Index k = 0; k < d; ++k) out.data.features(i, k) = rng.uniform01();
    const double eps = label_noise * rng.uniform01();
    out.data.labels[i] = out.data.features.row(i).dot(out.truth) + eps;
  }
  return out;
}

GeneratedData gen_logistic(Index N, Index d, std::uint64_t seed)
{
  if (N < 1 || d < 1) throw std::invalid_argument("gen_logistic needs N, d >= 1");
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::data);
  std::normal_distribution<double> normal(0.0, 1.0);
  GeneratedData out;
  out.truth.resize(d);
  for (Index k = 0; k < d; ++k) out.truth[k] = normal(rng);
  out.data.features.resize(N, d);
  out.data.labels.resize(N);
  out.data.seed = seed;
  for (Index i = 0; i < N; ++i) {
    for (Index k = 0; k < d; ++k) out.data.features(i, k) = normal(rng);
    const double z = out.data.features.row(i).dot(out.truth);
    const double p = 1.0 / (1.0 + std::exp(-z));
    out.data.labels[i] = rng.uniform01() < p ? 1.0 : 0.0;
  }
  return out;
}

GeneratedData gen_quadratic_toy(Index N, Index d, std::uint64_t seed)
{
  if (N < 1 || d < 1) throw std::invalid_argument("gen_quadratic_toy needs N, d >= 1");
  KeyedRng rng(seed, 0, 0, 0, KeyedRng::Stream::data);
  std::normal_distribution<double> normal(0.0, 1.0);
  GeneratedData out;
  out.data.features.resize(N, d);
  out.data.labels = Vector::Zero(N);
  out.data.seed = seed;
  for (Index i = 0; i < N; ++i) {
    for (Index k = 0; k < d; ++k) out.data.features(i, k) = normal(rng);
  }
  out.truth = out.data.features.colwise().mean().transpose();
  return out;
}

Vector toy_curvature(const LossModel& model, Index d)
{
  if (!(model.condition >= 1.0)) throw std::invalid_argument("toy condition number must be >= 1");
  Vector h(d);
  for (Index k = 0; k < d; ++k) {
    const double frac = d > 1 ? static_cast<double>(k) / static_cast<double>(d - 1) : 0.0;
    h[k] = std::pow(model.condition, -frac);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Losses

ValueGrad linreg_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& u,
                            const Eigen::Ref<const Vector>& v)
{
  const Index m = u.rows();
  if (m == 0) throw std::invalid_argument("empty data subset");
  if (u.cols() != x.size()) throw std::invalid_argument("feature dimension does not match x");
  const Vector resid = v - u * x;
  const double inv_m = 1.0 / static_cast<double>(m);
  return {0.5 * inv_m * resid.squaredNorm(), -inv_m * (u.transpose() * resid)};
}

ValueGrad logistic_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& u,
                              const Eigen::Ref<const Vector>& y, double reg)
{
  const Index m = u.rows();
  if (m == 0) throw std::invalid_argument("empty data subset");
  if (u.cols() != x.size()) throw std::invalid_argument("feature dimension does not match x");
  if (!(reg >= 0.0)) throw std::invalid_argument("regularization must be >= 0");
  const Vector z = u * x;
  Vector dz(m);
  double value = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double yi = y[i];
    if (yi != 0.0 && yi != 1.0) throw std::invalid_argument("logistic labels must be 0 or 1");
    const double zi = z[i];
    // log(1 + e^z), stable on both tails
    const double softplus = zi > 0.0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    value += softplus - yi * zi;
    const double sig = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
    dz[i] = sig - yi;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  ValueGrad out;
  out.value = inv_m * value + 0.5 * reg * x.squaredNorm();
  out.grad = inv_m * (u.transpose() * dz) + reg * x;
  return out;
}

ValueGrad quadratic_value_grad(const Vector& x, const Eigen::Ref<const Matrix>& centers,
                               const Vector& curvature)
{
  const Index m = centers.rows();
  if (m == 0) throw std::invalid_argument("empty data subset");
  if (centers.cols() != x.size()) throw std::invalid_argument("center dimension does not match x");
  double value = 0.0;
  for (Index i = 0; i < m; ++i) {
    const Vector diff = x - centers.row(i).transpose();
    value += 0.5 * diff.dot(curvature.cwiseProduct(diff));
  }
  const Vector mean = centers.colwise().mean().transpose();
  return {value / static_cast<double>(m), curvature.cwiseProduct(x - mean)};
}

ValueGrad value_grad(const LossModel& model, const Vector& x, const Eigen::Ref<const Matrix>& u,
                     const Eigen::Ref<const Vector>& labels)
{
  switch (model.kind) {
  case LossKind::linear_regression: return linreg_value_grad(x, u, labels);
  case LossKind::logistic_regression_l2: return logistic_value_grad(x, u, labels, model.reg);
  case LossKind::quadratic_toy: return quadratic_value_grad(x, u, toy_curvature(model, u.cols()));
  }
  throw std::invalid_argument("unsupported loss kind");
}

// ---------------------------------------------------------------------------
// Partition

std::vector<Index> largest_remainder_sizes(const StochasticVector& r, Index N)
{
  const Index n = r.size();
  std::vector<Index> sizes(static_cast<std::size_t>(n));
  std::vector<double> frac(static_cast<std::size_t>(n));
  Index assigned = 0;
  for (Index i = 0; i < n; ++i) {
    const double exact = r[i] * static_cast<double>(N);
    const auto base = static_cast<Index>(std::floor(exact));
    sizes[static_cast<std::size_t>(i)] = base;
    frac[static_cast<std::size_t>(i)] = exact - static_cast<double>(base);
    assigned += base;
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  Index remaining = N - assigned;
  for (std::size_t q = 0; remaining > 0; q = (q + 1) % order.size(), --remaining) {
    ++sizes[order[q]];
  }
  return sizes;
}

Partition partition(const Dataset& data, const StochasticVector& r, std::uint64_t seed)
{
  const Index N = data.size();
  const Index n = r.size();
  if (N < n) throw std::invalid_argument("partition needs at least one point per agent (N >= n)");
  const auto sizes = largest_remainder_sizes(r, N);
  for (Index i = 0; i < n; ++i) {
    if (sizes[static_cast<std::size_t>(i)] == 0) {
      throw std::invalid_argument("agent " + std::to_string(i) + " receives no data after rounding");
    }
  }
  std::vector<Index> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), Index{0});
  KeyedRng rng(seed, 1, 0, 0, KeyedRng::Stream::data);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<Index>> blocks(static_cast<std::size_t>(n));
  Vector realized(n);
  auto it = perm.begin();
  for (Index i = 0; i < n; ++i) {
    const Index m = sizes[static_cast<std::size_t>(i)];
    blocks[static_cast<std::size_t>(i)].assign(it, it + m);
    it += m;
    realized[i] = static_cast<double>(m) / static_cast<double>(N);
  }
  return Partition{std::move(blocks), r, StochasticVector(realized / realized.sum())};
}

// ---------------------------------------------------------------------------
// DistributedObjective

DistributedObjective::DistributedObjective(LossModel model, Dataset data, Partition part)
    : model_(model), data_(std::move(data)), part_(std::move(part))
{
  if (part_.agents() < 1) throw std::invalid_argument("partition has no agents");
  local_features_.reserve(part_.assignments.size());
  local_labels_.reserve(part_.assignments.size());
  for (const auto& block : part_.assignments) {
    if (block.empty()) throw std::invalid_argument("empty local data block");
    Matrix u(static_cast<Index>(block.size()), data_.dim());
    Vector v(static_cast<Index>(block.size()));
    for (std::size_t q = 0; q < block.size(); ++q) {
      u.row(static_cast<Index>(q)) = data_.features.row(block[q]);
      v[static_cast<Index>(q)] = data_.labels[block[q]];
    }
    local_features_.push_back(std::move(u));
    local_labels_.push_back(std::move(v));
  }
}

Vector DistributedObjective::local_grad(Index agent, const Vector& x) const
{
  return local_value_grad(agent, x).grad;
}

ValueGrad DistributedObjective::local_value_grad(Index agent, const Vector& x) const
{
  if (agent < 0 || agent >= agents()) throw std::invalid_argument("agent index out of range");
  const auto a = static_cast<std::size_t>(agent);
  return value_grad(model_, x, local_features_[a], local_labels_[a]);
}

Vector DistributedObjective::local_grad(Index agent, const Vector& x, Index batch, KeyedRng& rng) const
{
  if (agent < 0 || agent >= agents()) throw std::invalid_argument("agent index out of range");
  const auto a = static_cast<std::size_t>(agent);
  const Matrix& u = local_features_[a];
  const Index m = u.rows();
  if (batch < 1) throw std::invalid_argument("mini-batch must be non-empty");
  if (batch > m) throw std::invalid_argument("mini-batch larger than the local data");
  if (batch == m) return value_grad(model_, x, u, local_labels_[a]).grad;

  std::vector<Index> all(static_cast<std::size_t>(m));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> pick;
  pick.reserve(static_cast<std::size_t>(batch));
  std::sample(all.begin(), all.end(), std::back_inserter(pick), batch, rng);
  Matrix ub(batch, u.cols());
  Vector vb(batch);
  for (Index q = 0; q < batch; ++q) {
    ub.row(q) = u.row(pick[static_cast<std::size_t>(q)]);
    vb[q] = local_labels_[a][pick[static_cast<std::size_t>(q)]];
  }
  return value_grad(model_, x, ub, vb).grad;
}

ValueGrad DistributedObjective::global_value_grad(const Vector& x) const
{
  return value_grad(model_, x, data_.features, data_.labels);
}

// ---------------------------------------------------------------------------
// Diagnostics

double smoothness_estimate(const LossModel& model, const Dataset& data)
{
  const Index d = data.dim();
  if (model.kind == LossKind::quadratic_toy) return toy_curvature(model, d).maxCoeff();

  const Matrix cov = data.features.transpose() * data.features / static_cast<double>(data.size());
  Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
  double lambda = v.dot(cov * v);
  for (int it = 0; it < 10000; ++it) {
    Vector w = cov * v;
    const double norm = w.norm();
    if (norm == 0.0) {
      lambda = 0.0;
      break;
    }
    v = w / norm;
    const double next = v.dot(cov * v);
    const bool done = std::abs(next - lambda) <= 1e-9 * std::abs(next);
    lambda = next;
    if (done) break;
  }
  switch (model.kind) {
  case LossKind::linear_regression: return lambda;
  case LossKind::logistic_regression_l2: return lambda / 4.0 + model.reg;
  case LossKind::quadratic_toy: break;
  }
  throw std::invalid_argument("unsupported loss kind");
}

double gradient_variance_estimate(const LossModel& model, const Dataset& data, const Vector& x)
{
  const Vector full = value_grad(model, x, data.features, data.labels).grad;
  double acc = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    const Vector g = value_grad(model, x, data.features.row(i), data.labels.segment(i, 1)).grad;
    acc += (g - full).squaredNorm();
  }
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// CSV

void write_dataset_csv(std::ostream& os, const Dataset& data)
{
  const Index d = data.dim();
  for (Index k = 0; k < d; ++k) os << 'f' << k << ',';
  os << "label\n";
  os << std::setprecision(17);
  for (Index i = 0; i < data.size(); ++i) {
    for (Index k = 0; k < d; ++k) os << data.features(i, k) << ',';
    os << data.labels[i] << '\n';
  }
}

Dataset read_dataset_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset CSV is empty");
  const auto columns = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns < 2) throw std::runtime_error("dataset CSV needs at least one feature and a label");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Index>(row.size()) != columns) {
      throw std::runtime_error("dataset CSV row has " + std::to_string(row.size()) + " cells, expected " +
                               std::to_string(columns));
    }
    rows.push_back(std::move(row));
  }
  Dataset out;
  const auto N = static_cast<Index>(rows.size());
  out.features.resize(N, columns - 1);
  out.labels.resize(N);
  for (Index i = 0; i < N; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Index k = 0; k + 1 < columns; ++k) out.features(i, k) = row[static_cast<std::size_t>(k)];
    out.labels[i] = row.back();
  }
  return out;
}

} // namespace dimix

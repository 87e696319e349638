#include "dimix/lossy.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace dimix {

std::string to_string(ChannelKind kind)
{
  switch (kind) {
  case ChannelKind::perfect: return "perfect";
  case ChannelKind::rand_k: return "rand_k";
  case ChannelKind::quantizer: return "quantizer";
  case ChannelKind::gaussian: return "gaussian";
  }
  return "perfect";
}

ChannelKind channel_kind_from_string(const std::string& name)
{
  if (name == "perfect") return ChannelKind::perfect;
  if (name == "rand_k") return ChannelKind::rand_k;
  if (name == "quantizer") return ChannelKind::quantizer;
  if (name == "gaussian") return ChannelKind::gaussian;
  throw std::invalid_argument("unknown channel kind '" + name + "'");
}

LossyChannel LossyChannel::perfect() { return {}; }

LossyChannel LossyChannel::rand_k(int k, Index d, double norm_cap)
{
  LossyChannel c;
  c.kind = ChannelKind::rand_k;
  c.k = k;
  c.norm_cap = norm_cap;
  c.gamma_bound = gamma_for(c.kind, k, 0, 0.0, d, norm_cap);
  return c;
}

LossyChannel LossyChannel::quantizer(int s, Index d, double norm_cap)
{
  LossyChannel c;
  c.kind = ChannelKind::quantizer;
  c.s = s;
  c.norm_cap = norm_cap;
  c.gamma_bound = gamma_for(c.kind, 0, s, 0.0, d, norm_cap);
  return c;
}

LossyChannel LossyChannel::gaussian(double zeta)
{
  LossyChannel c;
  c.kind = ChannelKind::gaussian;
  c.zeta = zeta;
  c.gamma_bound = gamma_for(c.kind, 0, 0, zeta, 0, std::nullopt);
  return c;
}

Vector rand_k_sparsify(const Vector& x, int k, KeyedRng& rng)
{
  const Index d = x.size();
  if (k < 1 || k > d) throw std::invalid_argument("rand_k needs 1 <= k <= d");
  std::vector<Index> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates: the first k slots hold a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, d - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  const double scale = static_cast<double>(d) / static_cast<double>(k);
  Vector out = Vector::Zero(d);
  for (int i = 0; i < k; ++i) {
    const Index l = idx[static_cast<std::size_t>(i)];
    out[l] = scale * x[l];
  }
  return out;
}

Vector stochastic_quantize(const Vector& x, int s, KeyedRng& rng)
{
  if (s < 1) throw std::invalid_argument("quantizer needs s >= 1");
  const Index d = x.size();
  const double norm = x.norm();
  Vector out = Vector::Zero(d);
  if (norm == 0.0) return out;
  const double levels = static_cast<double>(s);
  for (Index l = 0; l < d; ++l) {
    const double a = levels * std::abs(x[l]) / norm;
    const double lower = std::floor(a);
    const double frac = a - lower;
    // frac == 0: both roundings coincide, no draw needed.
    const double level = (frac > 0.0 && rng.uniform01() < frac) ? lower + 1.0 : lower;
    const double sign = x[l] > 0.0 ? 1.0 : (x[l] < 0.0 ? -1.0 : 0.0);
    out[l] = norm * sign * level / levels;
  }
  return out;
}

Vector gaussian_corrupt(const Vector& x, double zeta, KeyedRng& rng)
{
  if (!(zeta >= 0.0)) throw std::invalid_argument("zeta must be >= 0");
  if (zeta == 0.0) return x;
  const Index d = x.size();
  std::normal_distribution<double> noise(0.0, zeta / std::sqrt(static_cast<double>(d)));
  Vector out = x;
  for (Index l = 0; l < d; ++l) out[l] += noise(rng);
  return out;
}

Vector transmit(const Vector& x, const LossyChannel& channel, KeyedRng& rng)
{
  switch (channel.kind) {
  case ChannelKind::perfect: return x;
  case ChannelKind::rand_k: return rand_k_sparsify(x, channel.k, rng);
  case ChannelKind::quantizer: return stochastic_quantize(x, channel.s, rng);
  case ChannelKind::gaussian: return gaussian_corrupt(x, channel.zeta, rng);
  }
  return x;
}

Vector neighbor_estimate(const RowMatrix& x, const Eigen::Ref<const Vector>& w_row,
                         const LossyChannel& channel, Index agent, std::int64_t t,
                         std::uint64_t seed)
{
  const Index n = x.rows();
  if (w_row.size() != n) throw std::invalid_argument("mixing row length does not match agent count");
  if (agent < 0 || agent >= n) throw std::invalid_argument("agent index out of range");
  Vector out = Vector::Zero(x.cols());
  for (Index j = 0; j < n; ++j) {
    const double w = w_row[j];
    if (w == 0.0) continue;
    const Vector xj = x.row(j).transpose();
    if (channel.kind == ChannelKind::perfect) {
      out += w * xj;
    } else {
      KeyedRng rng(seed, t, agent, j, KeyedRng::Stream::channel);
      out += w * transmit(xj, channel, rng);
    }
  }
  return out;
}

double gamma_for(ChannelKind kind, int k, int s, double zeta, Index d, std::optional<double> norm_cap)
{
  const auto dd = static_cast<double>(d);
  switch (kind) {
  case ChannelKind::perfect: return 0.0;
  case ChannelKind::rand_k:
    if (!norm_cap || !(*norm_cap > 0.0)) throw std::invalid_argument("rand_k gamma needs a norm cap D > 0");
    if (k < 1 || k > d) throw std::invalid_argument("rand_k needs 1 <= k <= d");
    return (dd / k - 1.0) * *norm_cap;
  case ChannelKind::quantizer:
    if (!norm_cap || !(*norm_cap > 0.0)) throw std::invalid_argument("quantizer gamma needs a norm cap D > 0");
    if (s < 1) throw std::invalid_argument("quantizer needs s >= 1");
    return std::min(std::sqrt(dd) / s, dd / (static_cast<double>(s) * s)) * *norm_cap;
  case ChannelKind::gaussian:
    if (!(zeta >= 0.0)) throw std::invalid_argument("zeta must be >= 0");
    return zeta * zeta;
  }
  return 0.0;
}

nlohmann::json to_json(const LossyChannel& channel)
{
  nlohmann::json j;
  j["kind"] = to_string(channel.kind);
  switch (channel.kind) {
  case ChannelKind::rand_k: j["k"] = channel.k; break;
  case ChannelKind::quantizer: j["s"] = channel.s; break;
  case ChannelKind::gaussian: j["zeta"] = channel.zeta; break;
  case ChannelKind::perfect: break;
  }
  if (channel.norm_cap) j["D"] = *channel.norm_cap;
  j["gamma"] = channel.gamma_bound;
  return j;
}

} // namespace dimix

#include "dimix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dimix {

Vector weighted_average(const RowMatrix& x, const StochasticVector& r)
{
  if (x.rows() != r.size()) throw std::invalid_argument("state rows do not match r");
  return x.transpose() * r.entries();
}

double network_variance(const RowMatrix& x, const StochasticVector& r)
{
  const Vector xbar = weighted_average(x, r);
  double acc = 0.0;
  for (Index i = 0; i < x.rows(); ++i) acc += r[i] * (x.row(i).transpose() - xbar).squaredNorm();
  return acc;
}

double m_theta(std::span<const double> grad_norm_sq, double theta)
{
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("theta must lie in (0,1)");
  if (grad_norm_sq.empty()) throw std::invalid_argument("empty gradient series");
  double acc = 0.0;
  for (double g : grad_norm_sq) {
    if (g < 0.0) throw std::invalid_argument("gradient norms must be non-negative");
    acc += std::pow(g, theta);
  }
  return std::pow(acc / static_cast<double>(grad_norm_sq.size()), 1.0 / theta);
}

double m_one(std::span<const double> grad_norm_sq)
{
  return m_one(grad_norm_sq, static_cast<std::int64_t>(grad_norm_sq.size()));
}

double m_one(std::span<const double> grad_norm_sq, std::int64_t T)
{
  if (T < 1 || T > static_cast<std::int64_t>(grad_norm_sq.size())) {
    throw std::invalid_argument("M_1 horizon outside the recorded series");
  }
  double acc = 0.0;
  for (std::int64_t t = 0; t < T; ++t) acc += grad_norm_sq[static_cast<std::size_t>(t)];
  return acc / static_cast<double>(T);
}

double consensus_mean(std::span<const double> net_variance, std::int64_t T)
{
  return m_one(net_variance, T);
}

std::vector<double> running_mean(std::span<const double> series)
{
  std::vector<double> out;
  out.reserve(series.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    acc += series[t];
    out.push_back(acc / static_cast<double>(t + 1));
  }
  return out;
}

PredictedExponent predicted_exponent(double nu, double mu)
{
  if (!(nu > 0.0 && nu < 1.0) || !(mu > 0.0 && mu < 1.0)) {
    throw std::invalid_argument("nu and mu must lie in (0,1)");
  }
  PredictedExponent out;
  out.exponent = std::min({1.0 - nu - mu, mu - nu, 2.0 * nu});
  out.boundary_log_factor = std::abs(mu - 0.5) <= 1e-12 || std::abs(3.0 * nu + mu - 1.0) <= 1e-12;
  return out;
}

int exponent_region(double nu, double mu)
{
  const double a = mu - 0.5;
  const double b = 3.0 * nu + mu - 1.0;
  if (std::abs(a) <= 1e-12 || std::abs(b) <= 1e-12) return 0;
  if (a > 0.0) return b > 0.0 ? 1 : 3;
  return b > 0.0 ? 2 : 4;
}

RateFit fit_rate(std::span<const std::pair<double, double>> series, double t_lo, double t_hi,
                 double burn_in)
{
  if (!(t_lo > 0.0 && t_lo < t_hi)) throw std::invalid_argument("fit window needs 0 < t_lo < t_hi");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw std::invalid_argument("burn-in fraction must lie in [0,1)");
  const double log_start = std::log(t_lo) + burn_in * (std::log(t_hi) - std::log(t_lo));

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [t, value] : series) {
    if (t < t_lo || t > t_hi) continue;
    if (std::log(t) < log_start) continue;
    if (!(value > 0.0)) throw std::invalid_argument("rate fit needs strictly positive values");
    xs.push_back(std::log(t));
    ys.push_back(std::log(value));
  }
  if (xs.size() < 10) throw std::invalid_argument("rate fit needs at least 10 points in the window");

  const auto m = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    mx += xs[q];
    my += ys[q];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    sxx += (xs[q] - mx) * (xs[q] - mx);
    sxy += (xs[q] - mx) * (ys[q] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("rate fit needs distinct time points");

  RateFit fit;
  fit.fitted_slope = sxy / sxx;
  fit.intercept = my - fit.fitted_slope * mx;
  fit.fit_window = {std::exp(log_start), t_hi};
  fit.points = xs.size();
  double ss = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double e = ys[q] - (fit.intercept + fit.fitted_slope * xs[q]);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / m);
  return fit;
}

} // namespace dimix

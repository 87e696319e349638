#include "dimix/schedules.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dimix {

namespace {

void require_time(std::int64_t t)
{
  if (t < 1) {
    throw std::invalid_argument("schedule time index must be >= 1, got " + std::to_string(t));
  }
}

} // namespace

std::vector<std::string> validate(const ScheduleParams& p)
{
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(p.alpha0 > 0.0) || !std::isfinite(p.alpha0)) fail("alpha0 must be > 0");
  if (!(p.beta0 > 0.0) || !std::isfinite(p.beta0)) fail("beta0 must be > 0");
  if (!(p.tau >= 0.0) || !std::isfinite(p.tau)) fail("tau must be >= 0");
  if (!(p.nu >= 0.0 && p.nu < 1.0)) fail("nu must lie in [0,1)");
  if (!(p.mu >= 0.0 && p.mu < 1.0)) fail("mu must lie in [0,1)");

  const double beta1 = p.beta0 / std::pow(1.0 + p.tau, p.mu);
  if (beta1 > 1.0) {
    std::ostringstream os;
    os << "beta(1) = beta0/(1+tau)^mu = " << beta1 << " exceeds 1 (requires beta0 <= (1+tau)^mu)";
    fail(os.str());
  }

  std::vector<std::string> warnings;
  if (p.alpha0 >= 1.0) {
    warnings.push_back("alpha0 = " + std::to_string(p.alpha0) + " lies outside (0,1)");
  }
  return warnings;
}

ScheduleParams fixed_step_mode(double alpha, double beta)
{
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("fixed alpha must lie in (0,1)");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("fixed beta must lie in (0,1)");
  return ScheduleParams{alpha, 0.0, beta, 0.0, 0.0};
}

double alpha_at(const ScheduleParams& p, std::int64_t t)
{
  require_time(t);
  if (p.nu == 0.0) return p.alpha0;
  return p.alpha0 / std::pow(static_cast<double>(t) + p.tau, p.nu);
}

double beta_at(const ScheduleParams& p, std::int64_t t)
{
  require_time(t);
  if (p.mu == 0.0) return p.beta0;
  return p.beta0 / std::pow(static_cast<double>(t) + p.tau, p.mu);
}

std::vector<double> beta_sequence(const ScheduleParams& p, std::int64_t count)
{
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t t = 1; t <= count; ++t) out.push_back(beta_at(p, t));
  return out;
}

double phi_sum(int i, int j, const ScheduleParams& p, std::int64_t T)
{
  require_time(T);
  if (i < 0 || j < 0) throw std::invalid_argument("phi_sum exponents must be non-negative");
  double sum = 0.0;
  for (std::int64_t t = 1; t <= T; ++t) {
    sum += std::pow(alpha_at(p, t), i) * std::pow(beta_at(p, t), j);
  }
  return sum;
}

void RunningProduct::multiply(double factor)
{
  if (zero_) return;
  if (factor == 0.0) {
    zero_ = true;
    return;
  }
  if (factor < 0.0) {
    negative_ = !negative_;
    factor = -factor;
  }
  if (!log_mode_ && factor < 1e-3) {
    log_mode_ = true;
    log_magnitude_ = std::log(linear_);
  }
  if (log_mode_) {
    log_magnitude_ += std::log(factor);
  } else {
    linear_ *= factor;
  }
}

double RunningProduct::value() const
{
  if (zero_) return 0.0;
  const double magnitude = log_mode_ ? std::exp(log_magnitude_) : linear_;
  return negative_ ? -magnitude : magnitude;
}

double telescoping_identity_residual(std::span<const double> beta, double lambda, std::int64_t t)
{
  require_time(t);
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (static_cast<std::int64_t>(beta.size()) < t - 1) {
    throw std::invalid_argument("beta sequence shorter than t-1");
  }
  // Walk s downwards so the product over k in (s, t-1] is available as we go.
  double lhs = 0.0;
  RunningProduct tail;
  for (std::int64_t s = t - 1; s >= 1; --s) {
    const double b = beta[static_cast<std::size_t>(s - 1)];
    lhs += b * tail.value();
    tail.multiply(1.0 - lambda * b);
  }
  const double rhs = (1.0 - tail.value()) / lambda;
  return std::abs(lhs - rhs);
}

double tail_sum_identity_residual(std::span<const double> beta, double lambda, std::int64_t s,
                                  std::int64_t T)
{
  require_time(s);
  if (s > T) throw std::invalid_argument("tail sum requires s <= T");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  if (static_cast<std::int64_t>(beta.size()) < T) {
    throw std::invalid_argument("beta sequence shorter than T");
  }
  double lhs = 0.0;
  RunningProduct head;
  for (std::int64_t t = s + 1; t <= T; ++t) {
    const double b = beta[static_cast<std::size_t>(t - 1)];
    lhs += b * head.value();
    head.multiply(1.0 - lambda * b);
  }
  const double rhs = (1.0 - head.value()) / lambda;
  return std::abs(lhs - rhs);
}

PowerSumBound power_sum_bound(double delta, double tau, std::int64_t T)
{
  require_time(T);
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be >= 0");
  if (delta <= -1.0 && tau == 0.0) {
    throw std::invalid_argument("power-sum bound is undefined for delta <= -1 with tau = 0");
  }
  PowerSumBound out;
  for (std::int64_t t = 1; t <= T; ++t) out.sum += std::pow(static_cast<double>(t) + tau, delta);

  const double td = static_cast<double>(T);
  if (delta < -1.0) {
    out.bound = std::pow(tau, 1.0 + delta) / std::abs(1.0 + delta);
  } else if (delta == -1.0) {
    out.bound = std::log(td / tau + 1.0);
  } else {
    out.bound = std::pow(2.0, 1.0 + delta) / (1.0 + delta) * std::pow(td + tau, 1.0 + delta);
  }
  return out;
}

} // namespace dimix

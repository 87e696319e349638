#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dimix {

/// Parameters of the two step-size sequences
///   alpha(t) = alpha0 / (t + tau)^nu,   beta(t) = beta0 / (t + tau)^mu.
///
/// beta(t) is the mixing weight given to the (noisy) neighbour average and
/// alpha(t) * beta(t) is the effective gradient step. Time starts at t = 1.
struct ScheduleParams {
  double alpha0 = 0.1;
  double nu = 1.0 / 6.0;
  double beta0 = 0.5;
  double mu = 0.5;
  double tau = 0.0;

  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

/// Checks the parameter contracts and throws std::invalid_argument naming the
/// violated constraint. Returns soft warnings (alpha0 outside (0,1) is allowed
/// because large shifts tau keep the early steps small).
std::vector<std::string> validate(const ScheduleParams& p);

/// Constant schedule alpha(t) = alpha, beta(t) = beta; both must lie in (0,1).
ScheduleParams fixed_step_mode(double alpha, double beta);

double alpha_at(const ScheduleParams& p, std::int64_t t);
double beta_at(const ScheduleParams& p, std::int64_t t);

/// beta(1), ..., beta(count) as a vector indexed from 0.
std::vector<double> beta_sequence(const ScheduleParams& p, std::int64_t count);

/// sum_{t=1}^{T} alpha(t)^i beta(t)^j
double phi_sum(int i, int j, const ScheduleParams& p, std::int64_t T);

/// Product of factors that switches to log-magnitude accumulation as soon as a
/// factor of magnitude below 1e-3 is seen, so long products do not underflow.
class RunningProduct {
public:
  void multiply(double factor);
  double value() const;

private:
  double linear_ = 1.0;
  double log_magnitude_ = 0.0;
  bool log_mode_ = false;
  bool negative_ = false;
  bool zero_ = false;
};

// The two residual helpers below take beta as a span with beta[0] = beta(1).

/// |sum_{s=1}^{t-1} beta(s) prod_{k=s+1}^{t-1} (1 - lambda beta(k))
///   - (1/lambda) (1 - prod_{k=1}^{t-1} (1 - lambda beta(k)))|
double telescoping_identity_residual(std::span<const double> beta, double lambda, std::int64_t t);

/// |sum_{t=s+1}^{T} beta(t) prod_{k=s+1}^{t-1} (1 - lambda beta(k))
///   - (1/lambda) (1 - prod_{k=s+1}^{T} (1 - lambda beta(k)))|
double tail_sum_identity_residual(std::span<const double> beta, double lambda, std::int64_t s,
                                  std::int64_t T);

struct PowerSumBound {
  double sum = 0.0;
  double bound = 0.0;
};

/// sum_{t=1}^{T} (t + tau)^delta together with its closed-form upper bound
/// (integral comparison, three regimes split at delta = -1).
PowerSumBound power_sum_bound(double delta, double tau, std::int64_t T);

} // namespace dimix

#pragma once

#include "dimix/linalg.hpp"
#include "dimix/topology.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dimix {

/// xbar = r^T X.
Vector weighted_average(const RowMatrix& x, const StochasticVector& r);

/// ||X - 1 xbar||_r^2 = sum_i r_i ||x_i - xbar||^2.
double network_variance(const RowMatrix& x, const StochasticVector& r);

/// Power mean [ (1/T) sum_t g_t^theta ]^{1/theta} of a non-negative series, theta in (0,1).
double m_theta(std::span<const double> grad_norm_sq, double theta);

/// Arithmetic mean of the first T entries (all of them when T is omitted).
double m_one(std::span<const double> grad_norm_sq);
double m_one(std::span<const double> grad_norm_sq, std::int64_t T);

/// (1/T) sum_t network_variance(t) over the first T entries of a dense series.
double consensus_mean(std::span<const double> net_variance, std::int64_t T);

/// Running arithmetic means M_1(1), ..., M_1(T).
std::vector<double> running_mean(std::span<const double> series);

struct PredictedExponent {
  double exponent = 0.0;
  /// mu = 1/2 or 3 nu + mu = 1: the rate picks up a logarithmic factor.
  bool boundary_log_factor = false;
};

/// min{1 - nu - mu, mu - nu, 2 nu} for nu, mu in (0,1).
PredictedExponent predicted_exponent(double nu, double mu);

/// I: mu > 1/2, 3nu+mu > 1;  II: mu < 1/2, 3nu+mu > 1;
/// III: mu > 1/2, 3nu+mu < 1; IV: mu < 1/2, 3nu+mu < 1; 0 on a boundary line.
int exponent_region(double nu, double mu);

struct RateFit {
  double fitted_slope = 0.0;
  double intercept = 0.0;
  std::pair<double, double> fit_window{0.0, 0.0}; // after burn-in
  double residual = 0.0; // RMS of the log-log residuals
  std::size_t points = 0;
};

/// Ordinary least squares of ln(value) on ln(t) for points with t in
/// [t_lo, t_hi], after dropping the first `burn_in` fraction of the window
/// measured in ln t. Requires at least 10 points and positive values.
RateFit fit_rate(std::span<const std::pair<double, double>> series, double t_lo, double t_hi,
                 double burn_in = 0.1);

} // namespace dimix

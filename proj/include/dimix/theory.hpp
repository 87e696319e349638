#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dimix {

struct LemmaResult {
  std::string name;
  std::int64_t draws = 0;
  /// Largest (lhs - rhs) / max(|rhs|, 1) over the draws, or the largest
  /// identity residual; <= 0 for inequalities that hold.
  double max_violation = 0.0;
  bool pass = false;
  nlohmann::json details = nlohmann::json::object();
};

struct TheoryReport {
  std::uint64_t seed = 0;
  std::vector<LemmaResult> lemmas;

  bool pass() const;
};

struct TheoryOptions {
  /// Negative control: mixes every W(t) with a matrix that sends all weight
  /// to agent 1, so r^T W != r^T and the contraction check must fail.
  bool break_stationarity = false;
  /// Largest t in the exhaustive contraction sweep.
  std::int64_t contraction_horizon = 200;
};

/// Randomized property checks of the analysis lemmas:
///   young_inequality      ||u+v||^2 <= (1+w)||u||^2 + (1+1/w)||v||^2, vectors and r-norm
///   telescoping_identity  beta-weighted sums of (1 - lambda beta) products
///   power_sum_bound       sum (t+tau)^delta against its closed form
///   mixed_norm            ||AB||_r <= ||A||_r ||B||_F
///   contraction           ||(Phi(t:s) - 1 r^T) U||_r^2 <= kappa prod (1 - lambda beta) ||U||_r^2
TheoryReport run_theory_checks(std::uint64_t seed, const TheoryOptions& options = {});

nlohmann::json to_json(const TheoryReport& report);

} // namespace dimix

#pragma once

#include "dimix/linalg.hpp"
#include "dimix/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace dimix {

enum class ChannelKind { perfect, rand_k, quantizer, gaussian };

std::string to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& name);

/// Lossy information-sharing layer between agents. Sender j compresses its
/// state (rand_k, quantizer) or the link adds Gaussian noise; receiver i
/// averages what arrives with its mixing row:
///   xhat_i = sum_j W_ij y_ij = sum_j W_ij x_j + e_i.
struct LossyChannel {
  ChannelKind kind = ChannelKind::perfect;
  int k = 0;          // rand_k support size
  int s = 0;          // quantizer levels
  double zeta = 0.0;  // Gaussian total noise standard deviation
  /// Cap D on ||x||^2 that the compression variance bound assumes.
  std::optional<double> norm_cap;
  /// Per-agent bound gamma on E||e_i||^2 (0 for the perfect channel).
  double gamma_bound = 0.0;

  static LossyChannel perfect();
  static LossyChannel rand_k(int k, Index d, double norm_cap);
  static LossyChannel quantizer(int s, Index d, double norm_cap);
  static LossyChannel gaussian(double zeta);
};

/// Keeps a uniformly random k-subset of coordinates scaled by d/k, zero elsewhere.
Vector rand_k_sparsify(const Vector& x, int k, KeyedRng& rng);

/// Norm-scaled randomized rounding to s levels per coordinate:
///   out_l = ||x|| sign(x_l) zeta(|x_l| / ||x||, s),
/// where zeta rounds s*v up with probability s*v - floor(s*v). Zero maps to zero.
Vector stochastic_quantize(const Vector& x, int s, KeyedRng& rng);

/// x + z, z ~ N(0, (zeta^2 / d) I) so that E||z||^2 = zeta^2.
Vector gaussian_corrupt(const Vector& x, double zeta, KeyedRng& rng);

/// What agent i receives from agent j on a single link.
Vector transmit(const Vector& x, const LossyChannel& channel, KeyedRng& rng);

/// Noisy neighbour average for one agent. Randomness for the link j -> agent
/// at time t is drawn from KeyedRng(seed, t, agent, j, channel), independent
/// of evaluation order.
Vector neighbor_estimate(const RowMatrix& x, const Eigen::Ref<const Vector>& w_row,
                         const LossyChannel& channel, Index agent, std::int64_t t,
                         std::uint64_t seed);

/// gamma for each channel kind: (d/k - 1) D, min(sqrt(d)/s, d/s^2) D, zeta^2, 0.
double gamma_for(ChannelKind kind, int k, int s, double zeta, Index d, std::optional<double> norm_cap);

nlohmann::json to_json(const LossyChannel& channel);

} // namespace dimix

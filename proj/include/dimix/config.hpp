#pragma once

#include "dimix/engine.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimix {

/// Schema violation. what() starts with the offending field path, e.g.
/// "channel.s: expected an integer".
class ConfigError : public std::invalid_argument {
public:
  ConfigError(const std::string& path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

// Config documents are JSON objects:
//
//   {
//     "T": 10000, "seed": 0, "record_every": 10, "seeds": 1, "dense_series": false,
//     "batch": 20,                                   (optional)
//     "mode": "diminishing" | "fixed",
//     "schedule": {"alpha0", "nu", "beta0", "mu", "tau"},
//     "fixed": {"alpha", "beta"},
//     "topology": {"kind": "cycle" | "gossip" | "erdos_renyi", "n",
//                  "r": "uniform" | "random" | [r_1, ..., r_n], "r_seed",
//                  "edge_prob", "c", "seed"},
//     "channel": {"kind": "perfect" | "rand_k" | "quantizer" | "gaussian",
//                 "k", "s", "zeta", "D"},
//     "loss": {"kind": "linear_regression" | "logistic_regression_l2" | "quadratic_toy",
//              "N", "d", "reg", "condition", "label_noise", "data_seed"}
//   }
//
// Every field is optional; unknown keys are rejected.

RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved document; parse_config(emit_config(c)) == c.
nlohmann::json emit_config(const RunConfig& config);

/// 16 hex digits of the FNV-1a hash of the compact resolved document.
std::string config_hash(const RunConfig& config);

struct PresetRun {
  std::string label;
  RunConfig config;
};

/// Scaled-down linear regression used by the rate and topology comparisons:
/// d=20, N=200, n=10, quantizer s=6, tau=0, five dense seeds of T=1e5.
RunConfig rate_study_base(TopologyKind kind, double nu, double mu);

std::vector<std::string> preset_names();
/// Expands a named preset into its runs; `seed` replaces the run seed of each.
std::vector<PresetRun> expand_preset(const std::string& name, std::uint64_t seed = 0);

} // namespace dimix

#pragma once

#include "dimix/engine.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dimix {

/// "# config_hash=<hash>", the header
/// t,net_variance,grad_norm_sq_at_mean,f_at_mean,max_row_norm_sq,alpha_t,beta_t
/// and one row per record, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record, const std::string& hash);
std::string trajectory_csv(const TrajectoryRecord& record, const std::string& hash);

/// Generic numeric table as written by the CSV writers; comment lines are skipped.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};
CsvTable read_csv_table(std::istream& is);

/// Config echo, hash, final metrics and the divergence / D-exceeded flags.
nlohmann::json run_summary(const RunConfig& config, const RunResult& result);

/// Mean over seeds of the recorded columns at each recording time, plus the
/// running M_1 of the seed-averaged dense gradient series when available.
std::string aggregate_csv(const RunConfig& config, const std::vector<RunResult>& runs);
nlohmann::json aggregate_summary(const RunConfig& config, const std::vector<RunResult>& runs);

/// Config with the run seed substituted; its hash identifies one constituent run.
RunConfig constituent_config(const RunConfig& config, std::uint64_t seed);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace dimix

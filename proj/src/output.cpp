#include "dimix/output.hpp"

#include "dimix/config.hpp"
#include "dimix/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dimix {

namespace {

std::string g17(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* const trajectory_columns = "t,net_variance,grad_norm_sq_at_mean,f_at_mean,max_row_norm_sq,alpha_t,beta_t";

} // namespace

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record, const std::string& hash)
{
  os << "# config_hash=" << hash << '\n' << trajectory_columns << '\n';
  for (const auto& r : record.rows) {
    os << r.t << ',' << g17(r.net_variance) << ',' << g17(r.grad_norm_sq_at_mean) << ',' << g17(r.f_at_mean)
       << ',' << g17(r.max_row_norm_sq) << ',' << g17(r.alpha_t) << ',' << g17(r.beta_t) << '\n';
  }
}

std::string trajectory_csv(const TrajectoryRecord& record, const std::string& hash)
{
  std::ostringstream os;
  write_trajectory_csv(os, record, hash);
  return os.str();
}

std::vector<double> CsvTable::column(const std::string& name) const
{
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::invalid_argument("no column '" + name + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row.at(k));
  return out;
}

CsvTable read_csv_table(std::istream& is)
{
  CsvTable table;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!header) {
      table.columns = cells;
      header = true;
      continue;
    }
    if (cells.size() != table.columns.size()) throw std::invalid_argument("ragged CSV row: " + line);
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(c.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(c));
      } catch (const std::exception&) {
        throw std::invalid_argument("non-numeric CSV cell '" + c + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (!header) throw std::invalid_argument("CSV has no header");
  return table;
}

RunConfig constituent_config(const RunConfig& config, std::uint64_t seed)
{
  RunConfig c = config;
  c.seed = seed;
  c.seeds = 1;
  return c;
}

nlohmann::json run_summary(const RunConfig& config, const RunResult& result)
{
  const RunConfig own = constituent_config(config, result.seed);
  nlohmann::json j;
  j["config"] = emit_config(own);
  j["config_hash"] = config_hash(own);
  j["seed"] = result.seed;
  j["estimator"] = "single-run";
  j["diverged"] = result.diverged;
  if (result.diverged) {
    j["divergence"] = {{"t", result.diverged_at}, {"agent", result.diverged_agent},
                       {"message", result.divergence_message}};
  }
  j["max_row_norm_sq"] = result.max_row_norm_sq_seen;
  j["D"] = config.channel.norm_cap ? nlohmann::json(*config.channel.norm_cap) : nlohmann::json(nullptr);
  j["D_exceeded"] = result.norm_cap_exceeded;
  const auto& rows = result.trajectory.rows;
  if (!rows.empty()) {
    const auto& last = rows.back();
    j["final"] = {{"t", last.t},
                  {"net_variance", last.net_variance},
                  {"grad_norm_sq_at_mean", last.grad_norm_sq_at_mean},
                  {"f_at_mean", last.f_at_mean},
                  {"max_row_norm_sq", last.max_row_norm_sq}};
  }
  const auto& g = result.trajectory.dense_grad_norm_sq;
  const auto& v = result.trajectory.dense_net_variance;
  if (!g.empty()) {
    j["metrics"] = {{"T", g.size()},
                    {"M_1", m_one(g)},
                    {"M_theta_0.5", m_theta(g, 0.5)},
                    {"consensus_mean", consensus_mean(v, static_cast<std::int64_t>(v.size()))}};
  }
  return j;
}

std::string aggregate_csv(const RunConfig& config, const std::vector<RunResult>& runs)
{
  if (runs.empty()) throw std::invalid_argument("no runs to aggregate");
  std::size_t rows = runs.front().trajectory.rows.size();
  for (const auto& r : runs) rows = std::min(rows, r.trajectory.rows.size());
  std::vector<double> m1;
  bool dense = std::all_of(runs.begin(), runs.end(), [](const RunResult& r) {
    return !r.diverged && !r.trajectory.dense_grad_norm_sq.empty();
  });
  if (dense) m1 = running_mean(mean_dense_grad_norm_sq(runs));

  std::ostringstream os;
  os << "# config_hash=" << config_hash(config) << '\n';
  os << "# runs=";
  for (std::size_t q = 0; q < runs.size(); ++q) {
    os << (q ? ";" : "") << config_hash(constituent_config(config, runs[q].seed));
  }
  os << '\n' << "t,mean_net_variance,mean_grad_norm_sq_at_mean,mean_f_at_mean,m1\n";
  const auto n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < rows; ++k) {
    double var = 0.0;
    double grad = 0.0;
    double f = 0.0;
    const std::int64_t t = runs.front().trajectory.rows[k].t;
    for (const auto& r : runs) {
      const auto& row = r.trajectory.rows[k];
      var += row.net_variance;
      grad += row.grad_norm_sq_at_mean;
      f += row.f_at_mean;
    }
    os << t << ',' << g17(var / n) << ',' << g17(grad / n) << ',' << g17(f / n) << ',';
    if (dense) os << g17(m1[static_cast<std::size_t>(t - 1)]);
    os << '\n';
  }
  return os.str();
}

nlohmann::json aggregate_summary(const RunConfig& config, const std::vector<RunResult>& runs)
{
  nlohmann::json j;
  j["config"] = emit_config(config);
  j["config_hash"] = config_hash(config);
  j["estimator"] = runs.size() > 1 ? "multi-run average" : "single-run";
  j["runs"] = nlohmann::json::array();
  bool any_diverged = false;
  bool any_exceeded = false;
  for (const auto& r : runs) {
    j["runs"].push_back({{"seed", r.seed},
                         {"config_hash", config_hash(constituent_config(config, r.seed))},
                         {"diverged", r.diverged},
                         {"D_exceeded", r.norm_cap_exceeded}});
    any_diverged = any_diverged || r.diverged;
    any_exceeded = any_exceeded || r.norm_cap_exceeded;
  }
  j["diverged"] = any_diverged;
  j["D_exceeded"] = any_exceeded;
  const bool dense = !any_diverged && std::all_of(runs.begin(), runs.end(), [](const RunResult& r) {
    return !r.trajectory.dense_grad_norm_sq.empty();
  });
  if (dense) {
    const std::vector<double> g = mean_dense_grad_norm_sq(runs);
    std::vector<double> v(g.size(), 0.0);
    for (const auto& r : runs) {
      for (std::size_t t = 0; t < v.size(); ++t) v[t] += r.trajectory.dense_net_variance[t] / static_cast<double>(runs.size());
    }
    j["metrics"] = {{"R", runs.size()},
                    {"T", g.size()},
                    {"M_1", m_one(g)},
                    {"M_theta_0.5", m_theta(g, 0.5)},
                    {"consensus_mean", consensus_mean(v, static_cast<std::int64_t>(v.size()))}};
  }
  return j;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " into place: " + ec.message());
}

} // namespace dimix

// dimix: command-line driver for DIMIX simulations.
//
//   dimix run <config.json> [--out dir]
//   dimix preset <name> [--seed k] [--out dir]
//   dimix check-theory [--seed k] [--out report.json]
//   dimix fit-rate <csv> [--window a,b] [--column name]
//
// Exit codes: 0 success, 1 validation, 2 divergence, 3 I/O.

#include "dimix/config.hpp"
#include "dimix/engine.hpp"
#include "dimix/metrics.hpp"
#include "dimix/output.hpp"
#include "dimix/theory.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace dimix;

namespace {

enum Exit { ok = 0, validation = 1, divergence = 2, io = 3 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_dir(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write(const fs::path& path, const std::string& content)
{
  try {
    write_file_atomic(path, content);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

// Runs one config into `dir`. Single seed: trajectory.csv + summary.json.
// Several seeds: seed_<k>.csv / seed_<k>.json per run plus aggregate.csv / aggregate.json.
int execute(const RunConfig& config, const fs::path& dir)
{
  for (const auto& w : validate(config)) std::cerr << "warning: " << w << '\n';
  const Problem problem = build_problem(config);
  ensure_dir(dir);

  bool diverged = false;
  if (config.seeds == 1) {
    const RunResult result = run(problem, config, config.seed);
    write(dir / "trajectory.csv", trajectory_csv(result.trajectory, config_hash(constituent_config(config, result.seed))));
    write(dir / "summary.json", run_summary(config, result).dump(2) + "\n");
    diverged = result.diverged;
    if (diverged) std::cerr << result.divergence_message << '\n';
  } else {
    const std::vector<RunResult> runs = run_many(problem, config);
    for (const auto& r : runs) {
      const std::string stem = "seed_" + std::to_string(r.seed);
      write(dir / (stem + ".csv"), trajectory_csv(r.trajectory, config_hash(constituent_config(config, r.seed))));
      write(dir / (stem + ".json"), run_summary(config, r).dump(2) + "\n");
      if (r.diverged) {
        diverged = true;
        std::cerr << "seed " << r.seed << ": " << r.divergence_message << '\n';
      }
    }
    write(dir / "aggregate.csv", aggregate_csv(config, runs));
    write(dir / "aggregate.json", aggregate_summary(config, runs).dump(2) + "\n");
  }
  std::cout << "wrote " << dir.string() << '\n';
  return diverged ? Exit::divergence : Exit::ok;
}

int cmd_run(const std::string& path, const fs::path& out)
{
  RunConfig config;
  try {
    config = load_config(path);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  return execute(config, out);
}

int cmd_preset(const std::string& name, std::uint64_t seed, const fs::path& out)
{
  int status = Exit::ok;
  for (const auto& p : expand_preset(name, seed)) {
    std::cout << name << "/" << p.label << " (config " << config_hash(p.config) << ")\n";
    status = std::max(status, execute(p.config, out / p.label));
  }
  return status;
}

int cmd_check_theory(std::uint64_t seed, const std::string& out, bool broken)
{
  TheoryOptions options;
  options.break_stationarity = broken;
  const TheoryReport report = run_theory_checks(seed, options);
  const std::string text = to_json(report).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write(out, text);
  }
  for (const auto& l : report.lemmas) {
    std::cerr << (l.pass ? "pass " : "FAIL ") << l.name << "  draws=" << l.draws
              << "  max_violation=" << l.max_violation << '\n';
  }
  return report.pass() ? Exit::ok : Exit::validation;
}

int cmd_fit_rate(const std::string& path, const std::string& window, const std::string& column, double burn_in)
{
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const CsvTable table = read_csv_table(in);
  const std::vector<double> ts = table.column(table.columns.front());
  const std::vector<double> vs = table.column(column);
  std::vector<std::pair<double, double>> series;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!std::isnan(vs[k])) series.emplace_back(ts[k], vs[k]);
  }
  if (series.empty()) throw std::invalid_argument("column '" + column + "' has no values");
  double lo = series.front().first;
  double hi = series.back().first;
  if (!window.empty()) {
    const auto comma = window.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--window expects a,b");
    lo = std::stod(window.substr(0, comma));
    hi = std::stod(window.substr(comma + 1));
  }
  const RateFit fit = fit_rate(series, lo, hi, burn_in);
  std::cout << "fitted_slope,intercept,t_lo,t_hi,residual,points\n";
  std::cout.precision(17);
  std::cout << fit.fitted_slope << ',' << fit.intercept << ',' << fit.fit_window.first << ','
            << fit.fit_window.second << ',' << fit.residual << ',' << fit.points << '\n';
  return Exit::ok;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"DIMIX decentralized optimization simulator"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: OpenMP default)");

  auto* run_cmd = app.add_subcommand("run", "run a config file");
  std::string config_path;
  std::string out_dir = "out";
  run_cmd->add_option("config", config_path, "JSON config")->required();
  run_cmd->add_option("--out", out_dir, "output directory");

  auto* preset_cmd = app.add_subcommand("preset", "run a named experiment preset");
  std::string preset;
  std::uint64_t seed = 0;
  preset_cmd->add_option("name", preset, "preset name")->required();
  preset_cmd->add_option("--seed", seed, "run seed");
  preset_cmd->add_option("--out", out_dir, "output directory");

  auto* theory_cmd = app.add_subcommand("check-theory", "randomized lemma checks");
  std::string report_path;
  bool broken = false;
  theory_cmd->add_option("--seed", seed, "seed");
  theory_cmd->add_option("--out", report_path, "report path (default: stdout)");
  theory_cmd->add_flag("--break-stationarity", broken, "negative control: perturb W so r^T W != r^T");

  auto* fit_cmd = app.add_subcommand("fit-rate", "log-log slope of a CSV column");
  std::string csv_path;
  std::string window;
  std::string column = "grad_norm_sq_at_mean";
  double burn_in = 0.1;
  fit_cmd->add_option("csv", csv_path, "CSV file")->required();
  fit_cmd->add_option("--window", window, "t_lo,t_hi");
  fit_cmd->add_option("--column", column, "value column");
  fit_cmd->add_option("--burn-in", burn_in, "fraction of the window (in ln t) to skip");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? Exit::ok : Exit::validation;
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (*run_cmd) return cmd_run(config_path, out_dir);
    if (*preset_cmd) return cmd_preset(preset, seed, out_dir);
    if (*theory_cmd) return cmd_check_theory(seed, report_path, broken);
    if (*fit_cmd) return cmd_fit_rate(csv_path, window, column, burn_in);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::io;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::divergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Exit::io;
  }
  return Exit::ok;
}

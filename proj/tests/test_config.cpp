#include <doctest.h>

#include "dimix/config.hpp"
#include "dimix/output.hpp"
#include "dimix/theory.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace dimix;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args)
{
  const std::string cmd = std::string(DIMIX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name)
{
  const fs::path dir = fs::temp_directory_path() / ("dimix_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* const toy = R"({"loss": {"kind": "quadratic_toy"}, "topology": {"kind": "cycle", "n": 4}})";

} // namespace

TEST_CASE("minimal config fills defaults")
{
  const RunConfig c = parse_config_text(toy);
  CHECK(c.T == 10000);
  CHECK(c.seed == 0);
  CHECK(c.channel.kind == ChannelKind::perfect);
  CHECK(c.topology.n == 4);
  CHECK(c.loss.kind == LossKind::quadratic_toy);
  CHECK(c == RunConfig{});
}

TEST_CASE("invalid configs name the offending field")
{
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"schedule": {"beta0": 2, "mu": 0, "tau": 0}})"),
                       doctest::Contains("beta(1)"), ConfigError);
  try {
    parse_config_text(R"({"channel": {"kind": "quantizer", "s": "six", "D": 1}})");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "channel.s");
  }
  try {
    parse_config_text(R"({"loss": {"kind": "linear_regression", "dim": 3}})");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "loss.dim");
  }
  try {
    parse_config_text(R"({"channel": {"kind": "quantizer", "s": 3}})");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("channel.D") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(R"({"topology": {"kind": "star"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"T": 0})"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/dimix.json"), std::runtime_error);
}

TEST_CASE("configs round-trip through JSON")
{
  for (const auto& name : preset_names()) {
    for (const auto& run : expand_preset(name, 3)) {
      const nlohmann::json doc = emit_config(run.config);
      CHECK(parse_config(doc) == run.config);
      CHECK(emit_config(parse_config(doc)) == doc);
      CHECK(config_hash(parse_config(doc)) == config_hash(run.config));
    }
  }
  RunConfig c;
  c.topology.r_mode = "explicit";
  c.topology.r_explicit = {0.1, 0.2, 0.3, 0.4};
  c.batch = 7;
  CHECK(parse_config(emit_config(c)) == c);
  RunConfig d = c;
  d.seed = 1;
  CHECK(config_hash(c) != config_hash(d));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("preset contents")
{
  const auto gossip = expand_preset("paper-3.2-linreg-gossip");
  REQUIRE(gossip.size() == 1);
  const RunConfig& g = gossip[0].config;
  CHECK(g.schedule == ScheduleParams{6.0, 0.25, 16.0, 0.75, 1500.0});
  CHECK(g.channel.kind == ChannelKind::quantizer);
  CHECK(g.channel.s == 6);
  CHECK(g.topology.kind == TopologyKind::gossip);
  CHECK(g.loss.N == 300);
  CHECK(g.loss.d == 100);
  CHECK(g.topology.n == 20);
  CHECK(validate(g).size() == 1); // alpha0 = 6 only warns

  const auto fixed = expand_preset("paper-3.2-linreg-fixed");
  CHECK(fixed[0].config.topology.kind == TopologyKind::cycle);

  const auto sec31 = expand_preset("paper-3.1-fixed-vs-diminishing", 4);
  REQUIRE(sec31.size() == 2);
  CHECK(sec31[0].config.schedule == ScheduleParams{0.005, 1.0 / 6.0, 0.6, 0.5, 2000.0});
  CHECK(sec31[1].config.mode == StepMode::fixed);
  CHECK(effective_schedule(sec31[1].config) == fixed_step_mode(0.001, 0.01));
  CHECK(sec31[0].config.topology.kind == TopologyKind::erdos_renyi);
  CHECK(sec31[0].config.channel.s == 3);
  CHECK(sec31[0].config.seed == 4);

  const auto sweep = expand_preset("theorem1-rate-sweep");
  CHECK(sweep.size() == 5);
  for (const auto& p : sweep) {
    CHECK(p.config.seeds == 5);
    CHECK(p.config.dense_series);
    CHECK(validate(p.config).empty());
  }
  CHECK_THROWS_AS(expand_preset("nope"), std::invalid_argument);
}

TEST_CASE("theory report")
{
  const TheoryReport report = run_theory_checks(0);
  REQUIRE(report.lemmas.size() == 5);
  for (const auto& l : report.lemmas) {
    INFO(l.name);
    CHECK(l.pass);
    CHECK(l.draws > 0);
  }
  CHECK(report.pass());
  const auto j = to_json(report);
  CHECK(j["pass"] == true);
  CHECK(j["lemmas"][4]["instances"][0]["B"] == 5);

  TheoryOptions broken;
  broken.break_stationarity = true;
  broken.contraction_horizon = 60;
  const TheoryReport neg = run_theory_checks(0, broken);
  CHECK_FALSE(neg.pass());
  CHECK_FALSE(neg.lemmas[4].pass);
  CHECK(neg.lemmas[4].max_violation > 0.0);
}

TEST_CASE("CSV helpers")
{
  std::istringstream in("# config_hash=abc\nt,v\n1,0.5\n2,\n");
  const CsvTable t = read_csv_table(in);
  CHECK(t.columns == std::vector<std::string>{"t", "v"});
  CHECK(t.column("v")[0] == 0.5);
  CHECK(std::isnan(t.column("v")[1]));
  CHECK_THROWS_AS(t.column("w"), std::invalid_argument);
}

TEST_CASE("command-line runs write their files deterministically")
{
  const fs::path dir = scratch("cli");
  {
    std::ofstream cfg(dir / "toy.json");
    cfg << R"({"loss": {"kind": "quadratic_toy"}, "topology": {"kind": "cycle", "n": 4},
               "channel": {"kind": "quantizer", "s": 3, "D": 100}, "T": 400, "record_every": 20})";
  }
  REQUIRE(cli("run " + (dir / "toy.json").string() + " --out " + (dir / "a").string()) == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) files += e.is_regular_file() ? 1 : 0;
  CHECK(files == 2);
  const std::string csv = slurp(dir / "a" / "trajectory.csv");
  CHECK(csv.rfind("# config_hash=", 0) == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["config"]["T"] == 400);
  CHECK(summary["estimator"] == "single-run");

  REQUIRE(cli("--threads 2 run " + (dir / "toy.json").string() + " --out " + (dir / "b").string()) == 0);
  CHECK(slurp(dir / "b" / "trajectory.csv") == csv);

  {
    std::ofstream cfg(dir / "multi.json");
    cfg << R"({"loss": {"kind": "linear_regression", "N": 40, "d": 3}, "topology": {"kind": "gossip", "n": 4},
               "T": 200, "seeds": 3, "dense_series": true})";
  }
  REQUIRE(cli("run " + (dir / "multi.json").string() + " --out " + (dir / "m").string()) == 0);
  for (const char* f : {"seed_0.csv", "seed_1.csv", "seed_2.csv", "seed_0.json", "aggregate.csv", "aggregate.json"}) {
    CHECK(fs::exists(dir / "m" / f));
  }
  std::ifstream agg(dir / "m" / "aggregate.csv");
  const CsvTable table = read_csv_table(agg);
  CHECK(table.columns.back() == "m1");
  CHECK_FALSE(std::isnan(table.column("m1").back()));

  CHECK(cli("run " + (dir / "missing.json").string()) == 3);
  {
    std::ofstream cfg(dir / "bad.json");
    cfg << R"({"schedule": {"beta0": 2, "mu": 0}})";
  }
  CHECK(cli("run " + (dir / "bad.json").string() + " --out " + (dir / "bad").string()) == 1);
  {
    std::ofstream cfg(dir / "boom.json");
    cfg << R"({"schedule": {"alpha0": 1000, "nu": 0, "beta0": 0.5, "mu": 0}, "T": 200})";
  }
  CHECK(cli("run " + (dir / "boom.json").string() + " --out " + (dir / "boom").string()) == 2);

  CHECK(cli("check-theory --out " + (dir / "theory.json").string()) == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "theory.json"))["pass"] == true);
  CHECK(cli("check-theory --break-stationarity --out " + (dir / "neg.json").string()) == 1);

  CHECK(cli("fit-rate " + (dir / "a" / "trajectory.csv").string() + " --column net_variance --window 20,400") == 0);
  fs::remove_all(dir);
}

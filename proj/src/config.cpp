#include "dimix/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace dimix {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key)
{
  return prefix.empty() ? key : prefix + "." + key;
}

// Typed access to one JSON object with field-path diagnostics.
class Section {
public:
  Section(const json& doc, std::string path, std::initializer_list<const char*> allowed)
      : doc_(doc), path_(std::move(path))
  {
    if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : doc_.items()) {
      if (!ok.count(item.key())) throw ConfigError(join(path_, item.key()), "unknown field");
    }
  }

  bool has(const char* key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }
  const json& at(const char* key) const { return doc_.at(key); }
  std::string path(const char* key) const { return join(path_, key); }

  double number(const char* key, double fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const char* key, std::int64_t fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == std::floor(d) && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
    }
    throw ConfigError(path(key), "expected an integer");
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(path(key), "expected a non-negative integer");
  }

  std::string text(const char* key, const std::string& fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
  }

  bool flag(const char* key, bool fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = doc_.at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
  }

private:
  const json& doc_;
  std::string path_;
};

template <class F>
auto with_path(const std::string& path, F&& f)
{
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

ScheduleParams parse_schedule(const json& doc)
{
  Section s(doc, "schedule", {"alpha0", "nu", "beta0", "mu", "tau"});
  ScheduleParams p;
  p.alpha0 = s.number("alpha0", p.alpha0);
  p.nu = s.number("nu", p.nu);
  p.beta0 = s.number("beta0", p.beta0);
  p.mu = s.number("mu", p.mu);
  p.tau = s.number("tau", p.tau);
  return p;
}

TopologySpec parse_topology(const json& doc)
{
  Section s(doc, "topology", {"kind", "n", "r", "r_seed", "edge_prob", "c", "seed"});
  TopologySpec t;
  t.kind = with_path(s.path("kind"), [&] { return topology_kind_from_string(s.text("kind", "cycle")); });
  t.n = s.integer("n", t.n);
  if (s.has("r")) {
    const json& r = s.at("r");
    if (r.is_string()) {
      t.r_mode = r.get<std::string>();
      if (t.r_mode != "uniform" && t.r_mode != "random") {
        throw ConfigError(s.path("r"), "expected \"uniform\", \"random\" or a list of weights");
      }
    } else if (r.is_array()) {
      t.r_mode = "explicit";
      for (std::size_t q = 0; q < r.size(); ++q) {
        if (!r[q].is_number()) throw ConfigError(s.path("r") + "[" + std::to_string(q) + "]", "expected a number");
        t.r_explicit.push_back(r[q].get<double>());
      }
    } else {
      throw ConfigError(s.path("r"), "expected \"uniform\", \"random\" or a list of weights");
    }
  }
  t.r_seed = s.unsigned_integer("r_seed", t.r_seed);
  t.edge_prob = s.number("edge_prob", t.edge_prob);
  t.c = s.number("c", t.c);
  t.seed = s.unsigned_integer("seed", t.seed);
  return t;
}

ChannelSpec parse_channel(const json& doc)
{
  Section s(doc, "channel", {"kind", "k", "s", "zeta", "D"});
  ChannelSpec c;
  c.kind = with_path(s.path("kind"), [&] { return channel_kind_from_string(s.text("kind", "perfect")); });
  c.k = static_cast<int>(s.integer("k", c.k));
  c.s = static_cast<int>(s.integer("s", c.s));
  c.zeta = s.number("zeta", c.zeta);
  if (s.has("D")) c.norm_cap = s.number("D", 0.0);
  return c;
}

LossSpec parse_loss(const json& doc)
{
  Section s(doc, "loss", {"kind", "N", "d", "reg", "condition", "label_noise", "data_seed"});
  LossSpec l;
  l.kind = with_path(s.path("kind"), [&] { return loss_kind_from_string(s.text("kind", "quadratic_toy")); });
  l.N = s.integer("N", l.N);
  l.d = s.integer("d", l.d);
  l.reg = s.number("reg", l.reg);
  l.condition = s.number("condition", l.condition);
  l.label_noise = s.number("label_noise", l.label_noise);
  l.data_seed = s.unsigned_integer("data_seed", l.data_seed);
  return l;
}

// Maps validation messages ("channel.s must be >= 1") back onto a field path.
[[noreturn]] void rethrow_validation(const std::invalid_argument& e)
{
  const std::string msg = e.what();
  static const char* const known[] = {"schedule", "fixed", "topology", "channel", "loss", "T",
                                      "record_every", "seeds", "batch"};
  for (const char* k : known) {
    const std::string key = k;
    if (msg.rfind(key, 0) == 0) {
      const auto end = msg.find(' ');
      throw ConfigError(msg.substr(0, end), msg);
    }
  }
  if (msg.find("alpha0") != std::string::npos || msg.find("beta") != std::string::npos ||
      msg.find("nu ") != std::string::npos || msg.find("mu ") != std::string::npos ||
      msg.find("tau") != std::string::npos) {
    throw ConfigError("schedule", msg);
  }
  throw ConfigError("<root>", msg);
}

} // namespace

RunConfig parse_config(const json& doc)
{
  Section root(doc, "", {"T", "seed", "record_every", "seeds", "dense_series", "batch", "mode", "schedule",
                         "fixed", "topology", "channel", "loss"});
  RunConfig c;
  c.T = root.integer("T", c.T);
  c.seed = root.unsigned_integer("seed", c.seed);
  c.record_every = root.integer("record_every", c.record_every);
  c.seeds = static_cast<int>(root.integer("seeds", c.seeds));
  c.dense_series = root.flag("dense_series", c.dense_series);
  if (root.has("batch")) c.batch = root.integer("batch", 1);

  const std::string mode = root.text("mode", "diminishing");
  if (mode == "diminishing") {
    c.mode = StepMode::diminishing;
  } else if (mode == "fixed") {
    c.mode = StepMode::fixed;
  } else {
    throw ConfigError("mode", "expected \"diminishing\" or \"fixed\"");
  }
  if (root.has("schedule")) c.schedule = parse_schedule(root.at("schedule"));
  if (root.has("fixed")) {
    Section f(root.at("fixed"), "fixed", {"alpha", "beta"});
    c.fixed_alpha = f.number("alpha", c.fixed_alpha);
    c.fixed_beta = f.number("beta", c.fixed_beta);
  }
  if (root.has("topology")) c.topology = parse_topology(root.at("topology"));
  if (root.has("channel")) c.channel = parse_channel(root.at("channel"));
  if (root.has("loss")) c.loss = parse_loss(root.at("loss"));

  try {
    if (c.mode == StepMode::fixed) {
      try {
        fixed_step_mode(c.fixed_alpha, c.fixed_beta);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("fixed", e.what());
      }
    }
    validate(c);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    rethrow_validation(e);
  }
  return c;
}

RunConfig parse_config_text(const std::string& text)
{
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json emit_config(const RunConfig& c)
{
  json doc;
  doc["T"] = c.T;
  doc["seed"] = c.seed;
  doc["record_every"] = c.record_every;
  doc["seeds"] = c.seeds;
  doc["dense_series"] = c.dense_series;
  if (c.batch) doc["batch"] = *c.batch;
  doc["mode"] = c.mode == StepMode::fixed ? "fixed" : "diminishing";
  doc["schedule"] = {{"alpha0", c.schedule.alpha0}, {"nu", c.schedule.nu}, {"beta0", c.schedule.beta0},
                     {"mu", c.schedule.mu}, {"tau", c.schedule.tau}};
  doc["fixed"] = {{"alpha", c.fixed_alpha}, {"beta", c.fixed_beta}};

  json topo = {{"kind", to_string(c.topology.kind)}, {"n", c.topology.n}, {"r_seed", c.topology.r_seed},
               {"edge_prob", c.topology.edge_prob}, {"c", c.topology.c}, {"seed", c.topology.seed}};
  if (c.topology.r_mode == "explicit") {
    topo["r"] = c.topology.r_explicit;
  } else {
    topo["r"] = c.topology.r_mode;
  }
  doc["topology"] = topo;

  json ch = {{"kind", to_string(c.channel.kind)}, {"k", c.channel.k}, {"s", c.channel.s},
             {"zeta", c.channel.zeta}};
  if (c.channel.norm_cap) ch["D"] = *c.channel.norm_cap;
  doc["channel"] = ch;

  doc["loss"] = {{"kind", to_string(c.loss.kind)}, {"N", c.loss.N}, {"d", c.loss.d}, {"reg", c.loss.reg},
                 {"condition", c.loss.condition}, {"label_noise", c.loss.label_noise},
                 {"data_seed", c.loss.data_seed}};
  return doc;
}

std::string config_hash(const RunConfig& config)
{
  const std::string text = emit_config(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

RunConfig logistic_er_base()
{
  RunConfig c;
  c.loss = {LossKind::logistic_regression_l2, 2000, 50, 0.01, 10.0, 0.1, 1};
  c.topology.kind = TopologyKind::erdos_renyi;
  c.topology.n = 20;
  c.topology.r_mode = "random";
  c.topology.r_seed = 1;
  c.topology.edge_prob = 0.3;
  c.topology.c = 0.95;
  c.topology.seed = 1;
  c.channel.kind = ChannelKind::quantizer;
  c.channel.s = 3;
  c.channel.norm_cap = 100.0;
  c.batch = 20;
  c.T = 7500;
  c.record_every = 10;
  return c;
}

RunConfig linreg_large_base(TopologyKind kind)
{
  RunConfig c;
  c.loss = {LossKind::linear_regression, 300, 100, 0.0, 10.0, 0.1, 1};
  c.topology.kind = kind;
  c.topology.n = 20;
  // Random r leaves some agents one or two points; their local curvature makes
  // alpha(1) beta(1) L_i exceed 2 and the run blows up within ~100 steps.
  c.topology.r_mode = "uniform";
  c.channel.kind = ChannelKind::quantizer;
  c.channel.s = 6;
  c.channel.norm_cap = 100.0;
  c.schedule = {6.0, 0.25, 16.0, 0.75, 1500.0};
  c.T = 20000;
  c.record_every = 10;
  return c;
}

} // namespace

RunConfig rate_study_base(TopologyKind kind, double nu, double mu)
{
  RunConfig c;
  c.loss = {LossKind::linear_regression, 200, 20, 0.0, 10.0, 0.1, 1};
  c.topology.kind = kind;
  c.topology.n = 10;
  c.topology.r_mode = "random";
  c.topology.r_seed = 1;
  c.channel.kind = ChannelKind::quantizer;
  c.channel.s = 6;
  c.channel.norm_cap = 100.0;
  c.schedule = {0.2, nu, 1.0, mu, 0.0};
  c.T = 100000;
  c.record_every = 100;
  c.seeds = 5;
  c.dense_series = true;
  return c;
}

std::vector<std::string> preset_names()
{
  return {"paper-3.1-fixed-vs-diminishing", "paper-3.2-linreg-fixed", "paper-3.2-linreg-gossip",
          "theorem1-rate-sweep"};
}

std::vector<PresetRun> expand_preset(const std::string& name, std::uint64_t seed)
{
  std::vector<PresetRun> runs;
  if (name == "paper-3.1-fixed-vs-diminishing") {
    RunConfig dim = logistic_er_base();
    dim.schedule = {0.005, 1.0 / 6.0, 0.6, 0.5, 2000.0};
    RunConfig fix = logistic_er_base();
    fix.mode = StepMode::fixed;
    fix.fixed_alpha = 0.001;
    fix.fixed_beta = 0.01;
    runs.push_back({"diminishing", dim});
    runs.push_back({"fixed", fix});
  } else if (name == "paper-3.2-linreg-fixed") {
    runs.push_back({"cycle", linreg_large_base(TopologyKind::cycle)});
  } else if (name == "paper-3.2-linreg-gossip") {
    runs.push_back({"gossip", linreg_large_base(TopologyKind::gossip)});
  } else if (name == "theorem1-rate-sweep") {
    const std::pair<double, double> grid[] = {
        {1.0 / 6.0, 0.5}, // optimum, on both boundary lines
        {0.1, 0.7},       // region I side (on 3 nu + mu = 1)
        {0.3, 0.45},      // region II
        {0.05, 0.75},     // region III
        {0.1, 0.25},      // region IV
    };
    for (const auto& [nu, mu] : grid) {
      std::ostringstream label;
      label << "nu" << nu << "_mu" << mu;
      runs.push_back({label.str(), rate_study_base(TopologyKind::gossip, nu, mu)});
    }
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  for (auto& r : runs) {
    r.config.seed = seed;
    validate(r.config);
  }
  return runs;
}

} // namespace dimix

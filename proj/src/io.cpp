// Copyright 2026 The evadmm Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "evadmm/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace evadmm {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& file, int line, const std::string& what)
    : std::runtime_error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         what),
      file_(file),
      line_(line) {}

std::string to_string(AggregatorObjective objective) {
  return objective == AggregatorObjective::kLoadVariance ? "lvm" : "ccm";
}

std::string to_string(ConstraintModel model) {
  return model == ConstraintModel::kFull ? "full" : "relaxed";
}

std::string to_string(UpdateMode mode) {
  return mode == UpdateMode::kGaussSeidel ? "gauss-seidel" : "jacobi";
}

namespace {

std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

/// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Text lines with '#' comments removed; blank lines are dropped. Keeps the
/// 1-based line number of each.
std::vector<std::pair<int, std::string>> content_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) out.emplace_back(no, line);
  }
  return out;
}

class FieldParser {
 public:
  FieldParser(const std::string& file, int line) : file_(file), line_(line) {}

  double real(const std::string& tok, const std::string& what) const {
    double v = 0.0;
    const char* end = tok.data() + tok.size();
    const auto r = std::from_chars(tok.data(), end, v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) {
      fail(what + ": expected a finite number, got '" + tok + "'");
    }
    return v;
  }

  long long integer(const std::string& tok, const std::string& what) const {
    long long v = 0;
    const char* end = tok.data() + tok.size();
    const auto r = std::from_chars(tok.data(), end, v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != end) {
      fail(what + ": expected an integer, got '" + tok + "'");
    }
    return v;
  }

  bool boolean(const std::string& tok, const std::string& what) const {
    const std::string t = lower(tok);
    if (t == "true" || t == "on" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "off" || t == "no" || t == "0") return false;
    fail(what + ": expected true/false, got '" + tok + "'");
  }

  AggregatorObjective objective(const std::string& tok) const {
    const std::string t = lower(tok);
    if (t == "lvm" || t == "load_variance") return AggregatorObjective::kLoadVariance;
    if (t == "ccm" || t == "charging_cost") return AggregatorObjective::kChargingCost;
    fail("objective: expected lvm or ccm, got '" + tok + "'");
  }

  ConstraintModel model(const std::string& tok) const {
    const std::string t = lower(tok);
    if (t == "full") return ConstraintModel::kFull;
    if (t == "relaxed") return ConstraintModel::kRelaxed;
    fail("model: expected full or relaxed, got '" + tok + "'");
  }

  UpdateMode mode(const std::string& tok) const {
    const std::string t = lower(tok);
    if (t == "gauss-seidel" || t == "gauss_seidel" || t == "gs") return UpdateMode::kGaussSeidel;
    if (t == "jacobi") return UpdateMode::kJacobi;
    fail("mode: expected gauss-seidel or jacobi, got '" + tok + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(file_, line_, what); }

 private:
  const std::string& file_;
  int line_;
};

struct CsvRow {
  int line = 0;
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

/// Parses a headed CSV. The header must start with `required` in order; any
/// further columns must be in `optional`.
CsvTable read_csv(const std::string& text, const std::string& name,
                  const std::vector<std::string>& required,
                  const std::set<std::string>& optional = {}) {
  const auto lines = content_lines(text);
  if (lines.empty()) throw ParseError(name, 0, "missing header line");
  CsvTable table;
  for (auto& h : split(lines.front().second, ',')) table.header.push_back(lower(h));
  const int hline = lines.front().first;
  for (size_t i = 0; i < required.size(); ++i) {
    if (i >= table.header.size() || table.header[i] != required[i]) {
      std::string want;
      for (const auto& r : required) want += (want.empty() ? "" : ",") + r;
      throw ParseError(name, hline, "header must start with " + want);
    }
  }
  std::set<std::string> seen(table.header.begin(), table.header.end());
  if (seen.size() != table.header.size()) throw ParseError(name, hline, "duplicate column");
  for (size_t i = required.size(); i < table.header.size(); ++i) {
    if (!optional.count(table.header[i])) {
      throw ParseError(name, hline, "unknown column '" + table.header[i] + "'");
    }
  }
  for (size_t i = 1; i < lines.size(); ++i) {
    CsvRow row{lines[i].first, split(lines[i].second, ',')};
    if (row.fields.size() != table.header.size()) {
      throw ParseError(name, row.line,
                       "expected " + std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(row.fields.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Per-step values of a step-indexed table; steps must run 0, 1, ..., T-1.
std::vector<Eigen::VectorXd> read_step_table(const std::string& text, const std::string& name,
                                             const std::vector<std::string>& columns) {
  std::vector<std::string> required{"step"};
  required.insert(required.end(), columns.begin(), columns.end());
  const CsvTable table = read_csv(text, name, required);
  const Eigen::Index T = static_cast<Eigen::Index>(table.rows.size());
  std::vector<Eigen::VectorXd> out(columns.size(), Eigen::VectorXd(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const CsvRow& row = table.rows[t];
    const FieldParser fp(name, row.line);
    if (fp.integer(row.fields[0], "step") != t) {
      fp.fail("steps must be consecutive from 0; expected " + std::to_string(t));
    }
    for (size_t c = 0; c < columns.size(); ++c) out[c][t] = fp.real(row.fields[c + 1], columns[c]);
  }
  return out;
}

const std::vector<std::string> kEventColumns{"ev_id", "arrival_step", "departure_step",
                                             "required_kwh"};
const std::vector<std::string> kEventOverrides{"p_ch_max",   "p_dis_max",      "energy_min",
                                               "energy_max", "initial_energy", "eta_ch",
                                               "eta_dis",    "alpha"};

double* override_field(EvDefaults& d, const std::string& name) {
  if (name == "p_ch_max") return &d.p_ch_max;
  if (name == "p_dis_max") return &d.p_dis_max;
  if (name == "energy_min") return &d.energy_min;
  if (name == "energy_max") return &d.energy_max;
  if (name == "initial_energy") return &d.initial_energy;
  if (name == "eta_ch") return &d.eta_ch;
  if (name == "eta_dis") return &d.eta_dis;
  if (name == "alpha") return &d.alpha;
  return nullptr;
}

std::vector<EvSpec> read_events(const std::string& text, const std::string& name,
                                const TimeGrid& grid) {
  const CsvTable table = read_csv(text, name, kEventColumns,
                                  std::set<std::string>(kEventOverrides.begin(),
                                                        kEventOverrides.end()));
  std::vector<EvSpec> evs;
  std::set<long long> ids;
  for (const CsvRow& row : table.rows) {
    const FieldParser fp(name, row.line);
    const long long id = fp.integer(row.fields[0], "ev_id");
    const long long arrival = fp.integer(row.fields[1], "arrival_step");
    const long long departure = fp.integer(row.fields[2], "departure_step");
    const double required = fp.real(row.fields[3], "required_kwh");
    if (!ids.insert(id).second) fp.fail("duplicate ev_id " + std::to_string(id));
    if (id < 0 || id > 1'000'000'000) fp.fail("ev_id out of range");
    if (arrival < 0 || departure <= arrival || departure > grid.steps) {
      fp.fail("need 0 <= arrival_step < departure_step <= " + std::to_string(grid.steps));
    }
    if (required < 0.0) fp.fail("required_kwh must be >= 0");
    EvDefaults d = default_scenario_params().ev;
    for (size_t c = kEventColumns.size(); c < table.header.size(); ++c) {
      *override_field(d, table.header[c]) = fp.real(row.fields[c], table.header[c]);
    }
    evs.push_back(make_ev(d, grid, static_cast<int>(id), static_cast<int>(arrival),
                          static_cast<int>(departure), required));
  }
  return evs;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void apply_aggregator_overrides(Scenario& s, const ConfigFile& cfg) {
  if (cfg.delta) s.aggregator.delta = *cfg.delta;
  if (cfg.p_ch_max_agg) s.aggregator.p_ch_max.setConstant(s.grid.steps, *cfg.p_ch_max_agg);
  if (cfg.p_dis_max_agg) s.aggregator.p_dis_max.setConstant(s.grid.steps, *cfg.p_dis_max_agg);
}

struct ScenarioNames {
  std::string demand = "demand.csv";
  std::string events = "events.csv";
  std::string tariff = "tariff.csv";
  std::string config = "config";
};

LoadedScenario parse_named(const ScenarioText& text, const ScenarioNames& names) {
  LoadedScenario out;
  out.config_file = parse_config(text.config_text, names.config);
  const ConfigFile& cf = out.config_file;
  Scenario& s = out.scenario;

  const auto demand = read_step_table(text.demand_csv, names.demand, {"kw"});
  if (demand[0].size() == 0) throw ParseError(names.demand, 0, "no demand rows");
  s.grid.steps = static_cast<int>(demand[0].size());
  s.grid.steps_per_hour = cf.steps_per_hour.value_or(4);
  s.demand = demand[0];

  if (trim(text.tariff_csv).empty()) {
    s.tariff = default_tariff(s.grid, cf.peak_start.value_or(16.0), cf.peak_end.value_or(21.0));
  } else {
    const auto tariff = read_step_table(text.tariff_csv, names.tariff, {"price_ch", "price_dis"});
    if (tariff[0].size() != s.grid.steps) {
      throw ParseError(names.tariff, 0,
                       "has " + std::to_string(tariff[0].size()) + " steps but " + names.demand +
                           " has " + std::to_string(s.grid.steps));
    }
    s.tariff.price_ch = tariff[0];
    s.tariff.price_dis = tariff[1];
  }

  s.evs = read_events(text.events_csv, names.events, s.grid);
  const AggregatorObjective objective = cf.objective.value_or(AggregatorObjective::kLoadVariance);
  s.aggregator = make_aggregator(default_scenario_params().aggregator, s.grid, objective);
  apply_aggregator_overrides(s, cf);

  const auto violations = validate(s);
  if (!violations.empty()) throw ValidationError(violations);
  out.config = resolve_config(cf, objective, s.grid);
  return out;
}

}  // namespace

ConfigFile parse_config(const std::string& text, const std::string& name) {
  ConfigFile cfg;
  std::set<std::string> seen;
  for (const auto& [no, line] : content_lines(text)) {
    const FieldParser fp(name, no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fp.fail("expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) fp.fail("duplicate key '" + key + "'");
    auto positive_int = [&](const char* what) {
      const long long v = fp.integer(value, what);
      if (v < 0 || v > 1'000'000'000) fp.fail(std::string(what) + " out of range");
      return static_cast<int>(v);
    };
    if (key == "rho") cfg.rho = fp.real(value, key);
    else if (key == "gamma") cfg.gamma = fp.real(value, key);
    else if (key == "eps_p") cfg.eps_p = fp.real(value, key);
    else if (key == "eps_d") cfg.eps_d = fp.real(value, key);
    else if (key == "delta") cfg.delta = fp.real(value, key);
    else if (key == "qp_tol") cfg.qp_tol = fp.real(value, key);
    else if (key == "miqp_gap") cfg.miqp_gap = fp.real(value, key);
    else if (key == "max_iter") cfg.max_iter = positive_int("max_iter");
    else if (key == "miqp_max_nodes") cfg.miqp_max_nodes = positive_int("miqp_max_nodes");
    else if (key == "steps_per_hour") cfg.steps_per_hour = positive_int("steps_per_hour");
    else if (key == "num_threads") cfg.num_threads = positive_int("num_threads");
    else if (key == "mode") cfg.mode = fp.mode(value);
    else if (key == "v2g") cfg.v2g = fp.boolean(value, key);
    else if (key == "lvm_caps") cfg.lvm_caps = fp.boolean(value, key);
    else if (key == "objective") cfg.objective = fp.objective(value);
    else if (key == "model") cfg.model = fp.model(value);
    else if (key == "p_ch_max_agg") cfg.p_ch_max_agg = fp.real(value, key);
    else if (key == "p_dis_max_agg") cfg.p_dis_max_agg = fp.real(value, key);
    else if (key == "peak_start") cfg.peak_start = fp.real(value, key);
    else if (key == "peak_end") cfg.peak_end = fp.real(value, key);
    else fp.fail("unknown key '" + key + "'");
  }
  if (cfg.steps_per_hour && *cfg.steps_per_hour < 1) {
    throw ParseError(name, 0, "steps_per_hour must be >= 1");
  }
  return cfg;
}

AdmmConfig resolve_config(const ConfigFile& f, AggregatorObjective objective,
                          const TimeGrid& grid) {
  AdmmConfig cfg = default_admm_config(objective, grid);
  if (f.rho) cfg.rho = *f.rho;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.eps_p) cfg.eps_p = *f.eps_p;
  if (f.eps_d) cfg.eps_d = *f.eps_d;
  if (f.max_iter) cfg.max_iter = *f.max_iter;
  if (f.mode) cfg.update_mode = *f.mode;
  if (f.v2g) cfg.v2g_enabled = *f.v2g;
  if (f.model) cfg.constraint_model = *f.model;
  if (f.lvm_caps) cfg.lvm_apply_caps = *f.lvm_caps;
  if (f.qp_tol) cfg.qp_tol = *f.qp_tol;
  if (f.miqp_gap) cfg.miqp_gap = *f.miqp_gap;
  if (f.miqp_max_nodes) cfg.miqp_max_nodes = *f.miqp_max_nodes;
  if (f.num_threads) cfg.num_threads = *f.num_threads;
  return cfg;
}

LoadedScenario parse_scenario(const std::string& demand_csv, const std::string& events_csv,
                              const std::string& tariff_csv, const std::string& config_text) {
  return parse_named({demand_csv, events_csv, tariff_csv, config_text}, {});
}

LoadedScenario load_scenario(const std::string& demand_path, const std::string& events_path,
                             const std::string& tariff_path, const std::string& config_path) {
  ScenarioText text;
  text.demand_csv = read_file(demand_path);
  text.events_csv = read_file(events_path);
  if (!tariff_path.empty()) text.tariff_csv = read_file(tariff_path);
  if (!config_path.empty()) text.config_text = read_file(config_path);
  ScenarioNames names{demand_path, events_path, tariff_path, config_path};
  return parse_named(text, names);
}

namespace {

/// The single value of a constant vector; throws otherwise.
double constant_value(const Eigen::VectorXd& v, const std::string& what) {
  if (v.size() == 0) throw std::invalid_argument("serialize: " + what + " is empty");
  if ((v.array() != v[0]).any()) {
    throw std::invalid_argument("serialize: " + what + " varies over time");
  }
  return v[0];
}

}  // namespace

ScenarioText serialize(const Scenario& s, const AdmmConfig& cfg) {
  const int T = s.grid.steps;
  ScenarioText out;
  std::ostringstream demand, events, tariff, config;
  demand << "step,kw\n";
  tariff << "step,price_ch,price_dis\n";
  for (int t = 0; t < T; ++t) {
    demand << t << ',' << fmt(s.demand[t]) << '\n';
    tariff << t << ',' << fmt(s.tariff.price_ch[t]) << ',' << fmt(s.tariff.price_dis[t]) << '\n';
  }
  events << "ev_id,arrival_step,departure_step,required_kwh";
  for (const auto& c : kEventOverrides) events << ',' << c;
  events << '\n';
  for (const auto& ev : s.evs) {
    int first = -1, last = -1;
    for (int t = 0; t < T; ++t) {
      if (ev.availability[t] > 0.0) {
        if (first < 0) first = t;
        last = t;
      }
    }
    if (first < 0) {
      throw std::invalid_argument("serialize: EV " + std::to_string(ev.id) + " is never available");
    }
    for (int t = first; t <= last; ++t) {
      if (ev.availability[t] != 1.0) {
        throw std::invalid_argument("serialize: EV " + std::to_string(ev.id) +
                                    " has a non-contiguous availability window");
      }
    }
    const std::string id = "EV " + std::to_string(ev.id) + " ";
    events << ev.id << ',' << first << ',' << last + 1 << ','
           << fmt(ev.required_energy - ev.initial_energy) << ','
           << fmt(constant_value(ev.p_ch_max, id + "p_ch_max")) << ','
           << fmt(constant_value(ev.p_dis_max, id + "p_dis_max")) << ','
           << fmt(constant_value(ev.energy_min, id + "energy_min")) << ','
           << fmt(constant_value(ev.energy_max, id + "energy_max")) << ','
           << fmt(ev.initial_energy) << ',' << fmt(ev.eta_ch) << ',' << fmt(ev.eta_dis) << ','
           << fmt(ev.alpha) << '\n';
  }
  config << "objective = " << to_string(s.aggregator.objective) << '\n'
         << "steps_per_hour = " << s.grid.steps_per_hour << '\n'
         << "delta = " << fmt(s.aggregator.delta) << '\n'
         << "p_ch_max_agg = " << fmt(constant_value(s.aggregator.p_ch_max, "aggregate p_ch_max"))
         << '\n'
         << "p_dis_max_agg = "
         << fmt(constant_value(s.aggregator.p_dis_max, "aggregate p_dis_max")) << '\n'
         << "rho = " << fmt(cfg.rho) << '\n'
         << "gamma = " << fmt(cfg.gamma) << '\n'
         << "eps_p = " << fmt(cfg.eps_p) << '\n'
         << "eps_d = " << fmt(cfg.eps_d) << '\n'
         << "max_iter = " << cfg.max_iter << '\n'
         << "mode = " << to_string(cfg.update_mode) << '\n'
         << "v2g = " << (cfg.v2g_enabled ? "true" : "false") << '\n'
         << "model = " << to_string(cfg.constraint_model) << '\n'
         << "lvm_caps = " << (cfg.lvm_apply_caps ? "true" : "false") << '\n'
         << "qp_tol = " << fmt(cfg.qp_tol) << '\n'
         << "miqp_gap = " << fmt(cfg.miqp_gap) << '\n'
         << "miqp_max_nodes = " << cfg.miqp_max_nodes << '\n'
         << "num_threads = " << cfg.num_threads << '\n';
  out.demand_csv = demand.str();
  out.events_csv = events.str();
  out.tariff_csv = tariff.str();
  out.config_text = config.str();
  return out;
}

void write_scenario(const Scenario& s, const AdmmConfig& cfg, const std::string& dir) {
  const ScenarioText text = serialize(s, cfg);
  fs::create_directories(dir);
  write_file(fs::path(dir) / "demand.csv", text.demand_csv);
  write_file(fs::path(dir) / "events.csv", text.events_csv);
  write_file(fs::path(dir) / "tariff.csv", text.tariff_csv);
  write_file(fs::path(dir) / "config.txt", text.config_text);
}

RunManifest parse_manifest(const std::string& text, const std::string& base_dir,
                           const std::string& name) {
  RunManifest m;
  std::set<std::string> seen;
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base_dir) / path).lexically_normal().string();
  };
  for (const auto& [no, line] : content_lines(text)) {
    const FieldParser fp(name, no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fp.fail("expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) fp.fail("duplicate key '" + key + "'");
    auto count = [&](const char* what, long long lo) {
      const long long v = fp.integer(value, what);
      if (v < lo || v > 1'000'000) fp.fail(std::string(what) + " out of range");
      return static_cast<int>(v);
    };
    if (key == "demand") m.demand_path = resolve(value);
    else if (key == "events") m.events_path = resolve(value);
    else if (key == "tariff") m.tariff_path = value.empty() ? "" : resolve(value);
    else if (key == "config") m.config_path = value.empty() ? "" : resolve(value);
    else if (key == "synthetic") m.synthetic = fp.boolean(value, key);
    else if (key == "synth_evs") m.synth_evs = count("synth_evs", 1);
    else if (key == "synth_steps") m.synth_steps = count("synth_steps", 1);
    else if (key == "synth_steps_per_hour") m.synth_steps_per_hour = count("synth_steps_per_hour", 1);
    else if (key == "seed") {
      const long long v = fp.integer(value, "seed");
      if (v < 0) fp.fail("seed must be >= 0");
      m.seed = static_cast<std::uint64_t>(v);
    } else if (key == "objectives") {
      m.objectives.clear();
      for (const auto& tok : split(value, ',')) m.objectives.push_back(fp.objective(tok));
    } else if (key == "gammas") {
      m.gammas.clear();
      for (const auto& tok : split(value, ',')) {
        const double g = fp.real(tok, "gammas");
        if (g < 0.0) fp.fail("gammas must be >= 0");
        m.gammas.push_back(g);
      }
    } else if (key == "v2g") {
      m.v2g.clear();
      for (const auto& tok : split(value, ',')) m.v2g.push_back(fp.boolean(tok, "v2g"));
    } else if (key == "models") {
      m.models.clear();
      for (const auto& tok : split(value, ',')) m.models.push_back(fp.model(tok));
    } else if (key == "out_dir") {
      m.out_dir = value;
    } else {
      fp.fail("unknown key '" + key + "'");
    }
  }
  if (!m.synthetic && (m.demand_path.empty() || m.events_path.empty())) {
    throw ParseError(name, 0, "needs demand and events paths or synthetic = true");
  }
  return m;
}

RunManifest load_manifest(const std::string& path) {
  const std::string base = fs::path(path).parent_path().string();
  return parse_manifest(read_file(path), base.empty() ? "." : base, path);
}

namespace {

std::string cell_name(AggregatorObjective obj, double gamma, bool v2g, ConstraintModel model) {
  return to_string(obj) + "_gamma" + fmt(gamma) + (v2g ? "_v2g" : "_nov2g") + "_" +
         to_string(model);
}

std::string status_of(const CellResult& c) {
  switch (c.exit_code) {
    case kExitOk: return "converged";
    case kExitInfeasible: return "infeasible";
    case kExitInvalidInput: return "invalid";
    default: return c.error.empty() ? "not_converged" : "failed";
  }
}

void write_cell_files(const fs::path& dir, const Scenario& s, const CellResult& c) {
  fs::create_directories(dir);
  std::ostringstream res, prof, sched;
  res << "k,primal_norm,dual_norm\n";
  for (const auto& r : c.run.history) {
    res << r.k << ',' << fmt(r.primal_norm) << ',' << fmt(r.dual_norm) << '\n';
  }
  write_file(dir / "residuals.csv", res.str());
  if (c.run.x_a.size() != s.grid.steps) return;
  prof << "step,base_kw,ev_kw,total_kw\n";
  for (int t = 0; t < s.grid.steps; ++t) {
    prof << t << ',' << fmt(s.demand[t]) << ',' << fmt(c.run.x_a[t]) << ','
         << fmt(s.demand[t] + c.run.x_a[t]) << '\n';
  }
  write_file(dir / "profile.csv", prof.str());
  sched << "ev_id,step,p_ch,p_dis,u_ch,u_dis,x,energy\n";
  for (size_t i = 0; i < c.run.schedules.size(); ++i) {
    const Schedule& sc = c.run.schedules[i];
    for (int t = 0; t < s.grid.steps; ++t) {
      sched << s.evs[i].id << ',' << t << ',' << fmt(sc.p_ch[t]) << ',' << fmt(sc.p_dis[t]) << ','
            << fmt(sc.u_ch[t]) << ',' << fmt(sc.u_dis[t]) << ',' << fmt(sc.x[t]) << ','
            << fmt(sc.energy[t + 1]) << '\n';
    }
  }
  write_file(dir / "schedules.csv", sched.str());
}

}  // namespace

std::string results_json(const std::vector<CellResult>& cells, std::uint64_t seed) {
  using nlohmann::ordered_json;
  ordered_json root;
  root["seed"] = seed;
  root["cells"] = ordered_json::array();
  for (const auto& c : cells) {
    ordered_json j;
    j["name"] = c.name;
    j["objective"] = to_string(c.objective);
    j["gamma"] = c.gamma;
    j["v2g"] = c.v2g;
    j["model"] = to_string(c.model);
    j["status"] = status_of(c);
    j["exit_code"] = c.exit_code;
    j["error"] = c.error;
    j["converged"] = c.run.converged;
    j["iterations"] = c.run.iterations;
    const bool have = c.run.x_a.size() > 0;
    j["objective_value"] = have ? ordered_json(c.run.objective) : ordered_json(nullptr);
    j["gap_limited_solves"] = c.run.gap_limited_solves;
    ordered_json metrics;
    const Metrics& m = c.run.metrics;
    metrics["load_variance"] = have ? ordered_json(m.load_variance) : ordered_json(nullptr);
    metrics["charging_cost"] = have ? ordered_json(m.charging_cost) : ordered_json(nullptr);
    metrics["degradation_cost"] = have ? ordered_json(m.degradation_cost) : ordered_json(nullptr);
    metrics["peak_kw"] = have ? ordered_json(m.peak_kw) : ordered_json(nullptr);
    j["metrics"] = metrics;
    ordered_json primal = ordered_json::array(), dual = ordered_json::array();
    for (const auto& r : c.run.history) {
      primal.push_back(r.primal_norm);
      dual.push_back(r.dual_norm);
    }
    j["residuals"] = {{"primal", primal}, {"dual", dual}};
    root["cells"].push_back(j);
  }
  return root.dump(2) + "\n";
}

ExperimentResult run_experiment(const RunManifest& manifest, std::ostream* log) {
  ExperimentResult out;
  const ConfigFile config_file =
      manifest.config_path.empty() ? ConfigFile{} : parse_config(read_file(manifest.config_path),
                                                                 manifest.config_path);
  std::vector<AggregatorObjective> objectives = manifest.objectives;
  if (objectives.empty()) {
    objectives.push_back(config_file.objective.value_or(AggregatorObjective::kLoadVariance));
  }
  const fs::path out_dir = manifest.out_dir;
  if (!manifest.out_dir.empty()) fs::create_directories(out_dir);
  std::ostringstream runtime;
  runtime << "cell,objective,gamma,v2g,model,iterations,converged,exit_code,wall_time_s\n";

  auto write_summary = [&]() {
    if (manifest.out_dir.empty()) return;
    write_file(out_dir / "results.json", results_json(out.cells, manifest.seed));
    write_file(out_dir / "runtime.csv", runtime.str());
  };

  for (const AggregatorObjective objective : objectives) {
    Scenario scenario;
    try {
      if (manifest.synthetic) {
        scenario = synth_scenario(manifest.synth_evs, manifest.synth_steps,
                                  manifest.synth_steps_per_hour, manifest.seed, objective);
        apply_aggregator_overrides(scenario, config_file);
      } else {
        scenario = load_scenario(manifest.demand_path, manifest.events_path,
                                 manifest.tariff_path, manifest.config_path)
                       .scenario;
        scenario.aggregator.objective = objective;
      }
    } catch (...) {
      write_summary();
      throw;
    }
    const AdmmConfig base = resolve_config(config_file, objective, scenario.grid);
    const std::vector<double> gammas =
        manifest.gammas.empty() ? std::vector<double>{base.gamma} : manifest.gammas;
    const std::vector<bool> v2gs =
        manifest.v2g.empty() ? std::vector<bool>{base.v2g_enabled} : manifest.v2g;
    const std::vector<ConstraintModel> models =
        manifest.models.empty() ? std::vector<ConstraintModel>{base.constraint_model}
                                : manifest.models;

    for (const double gamma : gammas) {
      for (const bool v2g : v2gs) {
        for (const ConstraintModel model : models) {
          CellResult cell;
          cell.name = cell_name(objective, gamma, v2g, model);
          cell.objective = objective;
          cell.gamma = gamma;
          cell.v2g = v2g;
          cell.model = model;
          AdmmConfig cfg = base;
          cfg.gamma = gamma;
          cfg.v2g_enabled = v2g;
          cfg.constraint_model = model;
          try {
            cell.run = run(scenario, cfg);
            if (!cell.run.converged) cell.exit_code = kExitNotConverged;
          } catch (const InfeasibleScenario& e) {
            cell.exit_code = kExitInfeasible;
            cell.error = e.what();
          } catch (const ValidationError& e) {
            cell.exit_code = kExitInvalidInput;
            cell.error = e.what();
          } catch (const std::exception& e) {
            cell.exit_code = kExitNotConverged;
            cell.error = std::string("solver failure: ") + e.what();
          }
          if (log) {
            *log << cell.name << ": " << status_of(cell);
            if (cell.error.empty()) {
              *log << " after " << cell.run.iterations << " iterations, objective "
                   << cell.run.objective << ", " << cell.run.wall_time_s << " s";
            } else {
              *log << " (" << cell.error << ")";
            }
            *log << '\n';
          }
          runtime << cell.name << ',' << to_string(objective) << ',' << fmt(gamma) << ','
                  << (v2g ? 1 : 0) << ',' << to_string(model) << ',' << cell.run.iterations
                  << ',' << (cell.run.converged ? 1 : 0) << ',' << cell.exit_code << ','
                  << fmt(cell.run.wall_time_s) << '\n';
          if (!manifest.out_dir.empty()) {
            write_cell_files(out_dir / "cells" / cell.name, scenario, cell);
          }
          if (out.exit_code == kExitOk) out.exit_code = cell.exit_code;
          out.cells.push_back(std::move(cell));
        }
      }
    }
  }
  write_summary();
  return out;
}

}  // namespace evadmm

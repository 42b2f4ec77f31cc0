#pragma once

// Run configuration: a flat key = value text format (strings, numbers,
// booleans, numeric lists), hand-editable and diffable. A run's manifest
// embeds the fully resolved configuration plus its hash; reruns from the
// same manifest reproduce outputs byte for byte.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fvtorus/csv.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/particles.hpp"
#include "fvtorus/version.hpp"

namespace fv {

using ConfigValue =
    std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

inline bool parse_number(std::string_view s, ConfigValue& out) {
  const std::string str(s);
  // integer if it contains no '.', 'e', 'E'
  if (str.find_first_of(".eE") == std::string::npos) {
    std::int64_t i = 0;
    const auto res = std::from_chars(str.data(), str.data() + str.size(), i);
    if (res.ec == std::errc() && res.ptr == str.data() + str.size()) {
      out = i;
      return true;
    }
  }
  double d = 0.0;
  const auto res = std::from_chars(str.data(), str.data() + str.size(), d);
  if (res.ec == std::errc() && res.ptr == str.data() + str.size()) {
    out = d;
    return true;
  }
  return false;
}

inline ConfigValue parse_value(std::string_view raw, int line_no) {
  const std::string_view v = trim(raw);
  if (v.empty()) throw std::invalid_argument("config: empty value on line " +
                                             std::to_string(line_no));
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') {
      throw std::invalid_argument("config: unterminated string on line " +
                                  std::to_string(line_no));
    }
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v.front() == '[') {
    if (v.back() != ']') {
      throw std::invalid_argument("config: unterminated list on line " +
                                  std::to_string(line_no));
    }
    std::vector<double> items;
    std::string_view body = v.substr(1, v.size() - 2);
    while (true) {
      const auto comma = body.find(',');
      const std::string_view tok = trim(body.substr(0, comma));
      if (!tok.empty()) {
        ConfigValue num;
        if (!parse_number(tok, num)) {
          throw std::invalid_argument("config: bad list entry on line " +
                                      std::to_string(line_no));
        }
        items.push_back(std::holds_alternative<double>(num)
                            ? std::get<double>(num)
                            : static_cast<double>(std::get<std::int64_t>(num)));
      }
      if (comma == std::string_view::npos) break;
      body.remove_prefix(comma + 1);
    }
    return items;
  }
  ConfigValue num;
  if (parse_number(v, num)) return num;
  throw std::invalid_argument("config: cannot parse value on line " +
                              std::to_string(line_no));
}

}  // namespace detail

class ConfigMap {
 public:
  static ConfigMap parse_string(std::string_view text) {
    ConfigMap cfg;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto eol = text.find('\n', pos);
      std::string_view line = text.substr(
          pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
      ++line_no;
      pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;

      // comments start at '#' outside quotes
      bool in_quotes = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quotes = !in_quotes;
        if (line[i] == '#' && !in_quotes) {
          line = line.substr(0, i);
          break;
        }
      }
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw std::invalid_argument("config: missing '=' on line " +
                                    std::to_string(line_no));
      }
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) {
        throw std::invalid_argument("config: empty key on line " +
                                    std::to_string(line_no));
      }
      cfg.kv_[key] = detail::parse_value(line.substr(eq + 1), line_no);
    }
    return cfg;
  }

  static ConfigMap parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void set(const std::string& key, ConfigValue v) { kv_[key] = std::move(v); }

  std::int64_t get_int(const std::string& key, std::int64_t def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
    throw std::invalid_argument("config: '" + key + "' must be an integer");
  }

  double get_double(const std::string& key, double def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) {
      return static_cast<double>(*i);
    }
    throw std::invalid_argument("config: '" + key + "' must be a number");
  }

  std::string get_string(const std::string& key, std::string def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
    throw std::invalid_argument("config: '" + key + "' must be a string");
  }

  bool get_bool(const std::string& key, bool def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (const auto* b = std::get_if<bool>(&it->second)) return *b;
    throw std::invalid_argument("config: '" + key + "' must be a boolean");
  }

  std::vector<double> get_list(const std::string& key,
                               std::vector<double> def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    if (const auto* l = std::get_if<std::vector<double>>(&it->second)) return *l;
    throw std::invalid_argument("config: '" + key + "' must be a list");
  }

  /// Sorted key = value text; the normal form that gets hashed.
  std::string canonical() const {
    std::ostringstream out;
    for (const auto& [key, value] : kv_) {
      out << key << " = ";
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, bool>) {
              out << (v ? "true" : "false");
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
              out << v;
            } else if constexpr (std::is_same_v<T, double>) {
              out << format_double(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
              out << '"' << v << '"';
            } else {
              out << '[';
              for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) out << ", ";
                out << format_double(v[i]);
              }
              out << ']';
            }
          },
          value);
      out << '\n';
    }
    return out.str();
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : kv_) {
      std::visit([&](const auto& v) { j[key] = v; }, value);
    }
    return j;
  }

 private:
  std::map<std::string, ConfigValue> kv_;
};

enum class Preset { kQuick, kPaper };

/// Typed view over a ConfigMap with the experiment defaults filled in.
/// Explicit keys always win over preset defaults.
struct RunConfig {
  std::string experiment = "theorem_main";
  std::string model = "demo";
  int dimension = 1;
  double drift_amp = 0.3;
  double lambda0 = 2.0;
  double eps = 0.25;
  std::uint64_t seed = 20240817;
  std::string out_dir = "runs/out";
  Preset preset = Preset::kQuick;
  double gamma = 0.05;
  std::vector<double> gammas = {0.16, 0.08, 0.04, 0.02};
  // particle rungs of the combined factorial; the coarsest bias rung cannot
  // resolve times below one mixing time, so it is left to the grid study
  std::vector<double> theorem_gammas = {0.08, 0.04, 0.02};
  long particles = 1000;
  std::vector<long> particle_ladder = {250, 1000, 4000};
  long steps = 40;
  std::vector<double> times = {0.08, 0.16, 0.24, 0.5, 1.0, 2.0};
  long replicates = 100;
  int threads = 0;
  int n_cells = 512;
  double qsd_tol = 1e-12;
  double rho_a = 1.0;
  std::string coupling = "reflection";
  double gamma_max = 0.25;
  long kappa_horizon = 12;
  long kappa_replicates = 800;
  long kappa_particles = 100;
  // The long-time study needs several steps per mixing time to resolve the
  // decay, hence its own finer default timestep.
  double long_time_gamma = 0.02;

  static RunConfig from_map(const ConfigMap& m) {
    RunConfig c;
    const std::string preset = m.get_string("preset", "quick");
    if (preset == "paper") {
      c.preset = Preset::kPaper;
      c.particle_ladder = {2000, 8000, 32000};
      c.replicates = 500;
    } else if (preset != "quick") {
      throw std::invalid_argument("config: preset must be quick or paper");
    }
    c.experiment = m.get_string("experiment", c.experiment);
    c.model = m.get_string("model", c.model);
    c.dimension = static_cast<int>(m.get_int("dimension", c.dimension));
    c.drift_amp = m.get_double("drift_amp", c.drift_amp);
    c.lambda0 = m.get_double("lambda0", c.lambda0);
    c.eps = m.get_double("eps", c.eps);
    c.seed = static_cast<std::uint64_t>(m.get_int("seed", static_cast<std::int64_t>(c.seed)));
    c.out_dir = m.get_string("out_dir", c.out_dir);
    c.gamma = m.get_double("gamma", c.gamma);
    c.gammas = m.get_list("gammas", c.gammas);
    c.theorem_gammas = m.get_list("theorem_gammas", c.theorem_gammas);
    c.particles = m.get_int("particles", c.particles);
    if (m.has("particle_ladder")) {
      c.particle_ladder.clear();
      for (double v : m.get_list("particle_ladder", {})) {
        c.particle_ladder.push_back(static_cast<long>(v));
      }
    }
    c.steps = m.get_int("steps", c.steps);
    c.times = m.get_list("times", c.times);
    c.replicates = m.get_int("replicates", c.replicates);
    c.threads = static_cast<int>(m.get_int("threads", c.threads));
    c.n_cells = static_cast<int>(m.get_int("n_cells", c.n_cells));
    c.qsd_tol = m.get_double("qsd_tol", c.qsd_tol);
    c.rho_a = m.get_double("rho_a", c.rho_a);
    c.coupling = m.get_string("coupling", c.coupling);
    c.gamma_max = m.get_double("gamma_max", c.gamma_max);
    c.kappa_horizon = m.get_int("kappa_horizon", c.kappa_horizon);
    c.kappa_replicates = m.get_int("kappa_replicates", c.kappa_replicates);
    c.kappa_particles = m.get_int("kappa_particles", c.kappa_particles);
    c.long_time_gamma = m.get_double("long_time_gamma", c.long_time_gamma);
    c.validate();
    return c;
  }

  void validate() const {
    if (gammas.empty() || theorem_gammas.empty() || particle_ladder.empty() ||
        times.empty()) {
      throw std::invalid_argument("config: ladders must be nonempty");
    }
    for (double g : gammas) {
      if (!(g > 0.0) || g > gamma_max) {
        throw std::invalid_argument("config: gammas must lie in (0, gamma_max]");
      }
    }
    for (double g : theorem_gammas) {
      if (!(g > 0.0) || g > gamma_max) {
        throw std::invalid_argument(
            "config: theorem_gammas must lie in (0, gamma_max]");
      }
    }
    if (!(gamma > 0.0) || gamma > gamma_max) {
      throw std::invalid_argument("config: gamma must lie in (0, gamma_max]");
    }
    for (long n : particle_ladder) {
      if (n < 1) throw std::invalid_argument("config: particle counts must be >= 1");
    }
    if (replicates < 2) throw std::invalid_argument("config: replicates must be >= 2");
  }

  /// The fully resolved configuration (defaults materialized), used for the
  /// manifest and its hash.
  ConfigMap to_map() const {
    ConfigMap m;
    m.set("experiment", experiment);
    m.set("model", model);
    m.set("dimension", static_cast<std::int64_t>(dimension));
    m.set("drift_amp", drift_amp);
    m.set("lambda0", lambda0);
    m.set("eps", eps);
    m.set("seed", static_cast<std::int64_t>(seed));
    m.set("out_dir", out_dir);
    m.set("preset", preset == Preset::kPaper ? std::string("paper")
                                             : std::string("quick"));
    m.set("gamma", gamma);
    m.set("gammas", gammas);
    m.set("theorem_gammas", theorem_gammas);
    m.set("particles", static_cast<std::int64_t>(particles));
    std::vector<double> ladder;
    for (long n : particle_ladder) ladder.push_back(static_cast<double>(n));
    m.set("particle_ladder", ladder);
    m.set("steps", static_cast<std::int64_t>(steps));
    m.set("times", times);
    m.set("replicates", static_cast<std::int64_t>(replicates));
    m.set("threads", static_cast<std::int64_t>(threads));
    m.set("n_cells", static_cast<std::int64_t>(n_cells));
    m.set("qsd_tol", qsd_tol);
    m.set("rho_a", rho_a);
    m.set("coupling", coupling);
    m.set("gamma_max", gamma_max);
    m.set("kappa_horizon", static_cast<std::int64_t>(kappa_horizon));
    m.set("kappa_replicates", static_cast<std::int64_t>(kappa_replicates));
    m.set("kappa_particles", static_cast<std::int64_t>(kappa_particles));
    m.set("long_time_gamma", long_time_gamma);
    return m;
  }

  ModelSpec make_model() const {
    SineFamilyParams p;
    p.dim = dimension;
    p.drift_amp = drift_amp;
    p.lambda0 = lambda0;
    p.eps = eps;
    return make_builtin(model, p);
  }

  CouplingMode coupling_mode() const {
    if (coupling == "reflection") return CouplingMode::kReflection;
    if (coupling == "synchronous") return CouplingMode::kSynchronous;
    throw std::invalid_argument("config: coupling must be reflection or synchronous");
  }
};

/// Writes manifest.json into `dir`. The manifest precedes any result file:
/// a run directory without one holds no trustworthy outputs.
inline void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg,
                           const std::string& command,
                           const std::vector<std::string>& outputs) {
  std::filesystem::create_directories(dir);
  const ConfigMap m = cfg.to_map();
  nlohmann::json j;
  j["tool"] = kToolName;
  j["version"] = kVersion;
  j["command"] = command;
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(m.hash()));
  j["config_hash"] = hex;
  j["config"] = m.to_json();
  j["outputs"] = outputs;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << j.dump(2) << '\n';
}

}  // namespace fv

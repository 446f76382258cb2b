#pragma once

// Run settings read from "key = value" text files, initial velocity fields, and run
// manifests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "smallbody/fsi_solver.hpp"
#include "smallbody/snapshot.hpp"

namespace smallbody {

// ---- Key-value text files ----------------------------------------------------------------

/// "key = value" lines; '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValueConfig c;
    c.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
      ++number;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ":" + std::to_string(number) +
                                    ": expected 'key = value'");
      const std::string key = trim(body.substr(0, eq));
      const std::string value = trim(body.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument(origin + ":" + std::to_string(number) + ": empty key");
      if (c.values_.count(key))
        throw std::invalid_argument(origin + ":" + std::to_string(number) + ": duplicate key '" +
                                    key + "'");
      c.values_[key] = value;
      c.lines_[key] = number;
    }
    return c;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

  [[nodiscard]] std::string text(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  [[nodiscard]] double number(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return convert<double>(key, it->second, [](const std::string& s, std::size_t* p) {
      return std::stod(s, p);
    });
  }

  [[nodiscard]] long long integer(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return convert<long long>(key, it->second, [](const std::string& s, std::size_t* p) {
      return std::stoll(s, p);
    });
  }

  /// Comma-separated numbers.
  [[nodiscard]] std::vector<double> numbers(const std::string& key,
                                            std::vector<double> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::istringstream is(it->second);
    std::string item;
    while (std::getline(is, item, ','))
      out.push_back(convert<double>(key, trim(item), [](const std::string& s, std::size_t* p) {
        return std::stod(s, p);
      }));
    return out;
  }

  /// Throws on any key outside `known`, naming its line.
  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_)
      if (!known.count(key))
        throw std::invalid_argument(origin_ + ":" + std::to_string(lines_.at(key)) +
                                    ": unknown key '" + key + "'");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  template <class T, class F>
  T convert(const std::string& key, const std::string& value, F&& f) const {
    try {
      std::size_t used = 0;
      const T v = f(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      const auto it = lines_.find(key);
      const std::string where = it == lines_.end() ? "" : ":" + std::to_string(it->second);
      throw std::invalid_argument(origin_ + where + ": bad value '" + value + "' for key '" +
                                  key + "'");
    }
  }

  std::string origin_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

// ---- Initial data ----------------------------------------------------------------------

struct InitSpec {
  enum class Kind { taylor_green, random, file };
  Kind kind = Kind::taylor_green;
  std::uint64_t seed = 0;  // random only
  std::string path;        // file only

  /// Parses "taylor_green", "random_seed=<int>" or "file=<path>".
  static InitSpec parse(const std::string& text) {
    if (text == "taylor_green") return {};
    if (text.rfind("random_seed=", 0) == 0) {
      const std::string v = text.substr(12);
      std::size_t used = 0;
      const long long s = std::stoll(v, &used);
      if (used != v.size() || s < 0) throw std::invalid_argument("bad random seed: " + v);
      return {Kind::random, static_cast<std::uint64_t>(s), {}};
    }
    if (text.rfind("file=", 0) == 0 && text.size() > 5) return {Kind::file, 0, text.substr(5)};
    throw std::invalid_argument("unknown init '" + text +
                                "' (expected taylor_green, random_seed=<int> or file=<path>)");
  }

  [[nodiscard]] std::string str() const {
    switch (kind) {
      case Kind::taylor_green: return "taylor_green";
      case Kind::random: return "random_seed=" + std::to_string(seed);
      case Kind::file: return "file=" + path;
    }
    return "?";
  }
};

/// (sin kx cos ky, -cos kx sin ky) with k = 2 pi / L.
inline VectorField taylor_green_field(const Grid& g, double amplitude = 1.0) {
  const double k = g.wavenumber_unit();
  return VectorField::sample(g, [&](Vec2 p) {
    return Vec2{amplitude * std::sin(k * p.x) * std::cos(k * p.y),
                -amplitude * std::cos(k * p.x) * std::sin(k * p.y)};
  });
}

/// grad^perp of a random trigonometric stream over modes 0 < |m| <= max_mode with
/// coefficients ~ N(0, 1) / |k|^2, scaled to max|u| = amplitude.
inline VectorField random_solenoidal(Spectral& sp, std::uint64_t seed, int max_mode,
                                     double amplitude) {
  const Grid& g = sp.grid();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coef(0.0, 1.0);
  struct Mode {
    double mx, my, c, s;
  };
  std::vector<Mode> modes;
  for (int my = -max_mode; my <= max_mode; ++my)
    for (int mx = 0; mx <= max_mode; ++mx)
      if ((mx != 0 || my > 0) && mx * mx + my * my <= max_mode * max_mode) {
        const double c = coef(rng);
        const double s = coef(rng);
        modes.push_back({double(mx), double(my), c, s});
      }
  const double k0 = g.wavenumber_unit();
  const ScalarField psi = ScalarField::sample(g, [&](Vec2 p) {
    double v = 0.0;
    for (const Mode& m : modes) {
      const double ph = k0 * (m.mx * p.x + m.my * p.y);
      v += (m.c * std::cos(ph) + m.s * std::sin(ph)) / ((m.mx * m.mx + m.my * m.my) * k0 * k0);
    }
    return v;
  });
  VectorField u = perp_gradient(sp, psi);
  const double top = u.max_abs();
  if (top > 0.0) u *= amplitude / top;
  return u;
}

// ---- Run settings ----------------------------------------------------------------------

/// Every setting of a single run. Defaults are the desk-scale sweep values.
struct RunSettings {
  double nu = 0.02;
  double L = 1.6;
  int N = 256;
  double dt = 0.002;
  double T = 1.0;
  double eps = 0.1;
  MassRule mass_rule{MassRule::Kind::eps_power, 1.5};
  BodyShape shape = BodyShape::disk;
  InitSpec init;
  double perturbation = 0.05;  // taylor_green: amplitude of the seeded low-mode addition
  std::uint64_t seed = 1;      // taylor_green perturbation seed
  int record_every = 10;       // steps between recorded frames and snapshots

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"nu",   "L",    "N",     "dt",   "T",
                                         "eps",  "mass_rule", "shape", "init",
                                         "perturbation", "seed", "record_every"};
    return k;
  }

  /// Reads the keys above; missing keys keep their defaults. `extra` lists further keys
  /// the caller will read itself.
  static RunSettings from(const KeyValueConfig& c, const std::set<std::string>& extra = {}) {
    std::set<std::string> known = keys();
    known.insert(extra.begin(), extra.end());
    c.reject_unknown(known);
    RunSettings s;
    s.nu = c.number("nu", s.nu);
    s.L = c.number("L", s.L);
    s.N = static_cast<int>(c.integer("N", s.N));
    s.dt = c.number("dt", s.dt);
    s.T = c.number("T", s.T);
    s.eps = c.number("eps", s.eps);
    if (c.has("mass_rule")) s.mass_rule = MassRule::parse(c.text("mass_rule", ""));
    if (c.has("shape")) s.shape = parse_shape(c.text("shape", ""));
    if (c.has("init")) s.init = InitSpec::parse(c.text("init", ""));
    s.perturbation = c.number("perturbation", s.perturbation);
    const long long seed = c.integer("seed", static_cast<long long>(s.seed));
    if (seed < 0) throw std::invalid_argument("seed must be non-negative");
    s.seed = static_cast<std::uint64_t>(seed);
    s.record_every = static_cast<int>(c.integer("record_every", s.record_every));
    s.validate();
    return s;
  }

  /// Applies a command-line seed: it replaces the perturbation seed and, for random
  /// initial data, the init seed.
  void override_seed(std::uint64_t value) {
    seed = value;
    if (init.kind == InitSpec::Kind::random) init.seed = value;
  }

  void validate() const {
    fluid().validate();
    if (record_every < 1) throw ValidationError("record_every must be >= 1", record_every);
    if (!(perturbation >= 0.0)) throw ValidationError("perturbation must be >= 0", perturbation);
  }

  [[nodiscard]] FluidConfig fluid() const {
    FluidConfig f;
    f.nu = nu;
    f.L = L;
    f.N = N;
    f.dt = dt;
    f.T = T;
    return f;
  }

  [[nodiscard]] FsiConfig fsi() const {
    FsiConfig c;
    c.fluid = fluid();
    c.shape = shape;
    c.eps = eps;
    c.mass_rule = mass_rule;
    return c;
  }
};

/// The initial velocity named by `s.init` on the settings' grid.
inline VectorField initial_velocity(Spectral& sp, const RunSettings& s) {
  const Grid& g = sp.grid();
  switch (s.init.kind) {
    case InitSpec::Kind::taylor_green: {
      VectorField u = taylor_green_field(g);
      if (s.perturbation > 0.0) u = u + s.perturbation * random_solenoidal(sp, s.seed, 3, 1.0);
      return u;
    }
    case InitSpec::Kind::random:
      return random_solenoidal(sp, s.init.seed, 4, 1.0);
    case InitSpec::Kind::file: {
      const Snapshot snap = read_snapshot(s.init.path);
      if (!std::holds_alternative<VectorField>(snap.field))
        throw std::invalid_argument("initial-data snapshot must hold a vector field: " +
                                    s.init.path);
      const VectorField& u = std::get<VectorField>(snap.field);
      if (!(u.grid() == g))
        throw std::invalid_argument("initial-data snapshot grid does not match L, N: " +
                                    s.init.path);
      return u;
    }
  }
  return VectorField(g);
}

// ---- Manifests -------------------------------------------------------------------------

inline nlohmann::ordered_json settings_json(const RunSettings& s) {
  nlohmann::ordered_json j;
  j["nu"] = s.nu;
  j["L"] = s.L;
  j["N"] = s.N;
  j["dt"] = s.dt;
  j["T"] = s.T;
  j["steps"] = s.fluid().steps();
  j["dx"] = s.L / s.N;
  j["eps"] = s.eps;
  j["mass_rule"] = s.mass_rule.str();
  j["shape"] = to_string(s.shape);
  j["init"] = s.init.str();
  j["perturbation"] = s.perturbation;
  j["seed"] = s.seed;
  j["record_every"] = s.record_every;
  j["cfl_limit"] = s.fluid().cfl_limit;
  j["dealias"] = "two_thirds";
  return j;
}

inline nlohmann::ordered_json body_json(const RigidBodyState& b) {
  nlohmann::ordered_json j;
  j["shape"] = to_string(b.shape);
  j["eps"] = b.eps;
  j["semi_axes"] = {b.semi_a, b.semi_b};
  j["mass"] = b.mass;
  j["density"] = b.density;
  j["inertia"] = b.inertia;
  j["h0"] = {b.h.x, b.h.y};
  j["hdot0"] = {b.hdot.x, b.hdot.y};
  j["theta0"] = b.theta;
  j["thetadot0"] = b.thetadot;
  return j;
}

}  // namespace smallbody

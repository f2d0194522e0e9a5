#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/fieldexpr.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/format.hpp"
#include "meanflow/stationary.hpp"
#include "meanflow/symmetry.hpp"

namespace meanflow {

struct ExperimentConfig {
  FlowConfig flow;
  NewtonConfig newton;
  std::string output_dir = "out";
  std::string preset;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// '#' starts a comment unless it sits inside a double-quoted expression.
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

class ConfigReader {
 public:
  ConfigReader(std::string source_name, const std::string& text)
      : name_(std::move(source_name)) {
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) {
          throw error(lineno, "malformed section header");
        }
        section_ = trim(line.substr(1, line.size() - 2));
        if (section_ != "mesh" && section_ != "flow" && section_ != "group" &&
            section_ != "newton" && section_ != "output") {
          throw error(lineno, "unknown section [" + section_ + "]");
        }
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw error(lineno, "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw error(lineno, "missing key before '='");
      if (value.empty()) throw error(lineno, "missing value for '" + key + "'");
      if (key == "preset" && section_.empty()) {
        if (!preset_.empty()) {
          throw error(lineno, "preset may only be assigned once");
        }
        preset_ = value;
        preset_line_ = lineno;
        continue;
      }
      if (section_.empty()) {
        throw error(lineno, "key '" + key + "' appears before any [section]");
      }
      apply(lineno, key, value);
    }
  }

  ConfigError error(int lineno, const std::string& what) const {
    return ConfigError(name_ + ":" + std::to_string(lineno) + ": " + what);
  }

  const std::string& preset() const { return preset_; }
  int preset_line() const { return preset_line_; }

  struct Assignment {
    int lineno;
    std::string section;
    std::string key;
    std::string value;
  };
  const std::vector<Assignment>& assignments() const { return assignments_; }

 private:
  void apply(int lineno, const std::string& key, const std::string& value) {
    assignments_.push_back({lineno, section_, key, value});
  }

  std::string name_;
  std::string section_;
  std::string preset_;
  int preset_line_ = 0;
  std::vector<Assignment> assignments_;
};

inline double config_double(const ConfigReader& r, int lineno,
                            const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0') {
    throw r.error(lineno, "value for '" + key + "' is not a number");
  }
  return v;
}

inline int config_int(const ConfigReader& r, int lineno, const std::string& key,
                      const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0') {
    throw r.error(lineno, "value for '" + key + "' is not an integer");
  }
  return static_cast<int>(v);
}

inline bool config_bool(const ConfigReader& r, int lineno, const std::string& key,
                        const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw r.error(lineno, "value for '" + key + "' must be true or false");
}

inline std::string config_quoted(const ConfigReader& r, int lineno,
                                 const std::string& key,
                                 const std::string& value) {
  if (value.size() < 2 || value.front() != '"' || value.back() != '"') {
    throw r.error(lineno, "value for '" + key + "' must be double-quoted");
  }
  return value.substr(1, value.size() - 2);
}

inline FieldExpr config_expr(const ConfigReader& r, int lineno,
                             const std::string& key, const std::string& value) {
  const std::string body = config_quoted(r, lineno, key, value);
  try {
    return parse_expr(body);
  } catch (const ParseError& e) {
    throw r.error(lineno, "in '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline void apply_preset(const std::string& name, ExperimentConfig& cfg) {
  if (name == "subcritical_baseline") {
    cfg.flow.mesh = MeshSpec{MeshKind::Torus, 64, 64};
    cfg.flow.rho = 4.0 * kPi;
    cfg.flow.f_expr = parse_expr("1 + 0.5*cos(x)");
    cfg.flow.u0_expr = parse_expr("0");
  } else if (name == "torus_translation") {
    cfg.flow.mesh = MeshSpec{MeshKind::Torus, 64, 64};
    cfg.flow.rho = 20.0 * kPi;
    cfg.flow.f_expr = parse_expr("1");
    cfg.flow.u0_expr = parse_expr("0.2*cos(16*x) + 0.2*cos(16*y)");
    cfg.flow.group = parse_generators("shift(4,0), shift(0,4)");
  } else if (name == "sphere_even") {
    cfg.flow.mesh = MeshSpec{MeshKind::Sphere, 32, 64};
    cfg.flow.rho = 12.0 * kPi;
    cfg.flow.f_expr = parse_expr("1 + 0.5*cos(theta)^2");
    cfg.flow.u0_expr = parse_expr("0");
    cfg.flow.group = parse_generators("antipodal");
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.preset = name;
}

// Semantic validation shared by every command: materializes the expressions,
// checks positivity and group compatibility, and syncs the Newton target.
// Runs before any output is written.
inline void validate_config(ExperimentConfig& cfg) {
  const MeshGeometry mesh = build_mesh(cfg.flow.mesh);
  cfg.newton.rho_target = cfg.flow.rho;
  validate(cfg.flow);
  validate(cfg.newton);

  Field f = mesh.make_field();
  try {
    f = materialize(mesh, cfg.flow.f_expr);
    validate_positive_weight(mesh, f);
    materialize(mesh, cfg.flow.u0_expr);
  } catch (const EvalError& e) {
    throw ConfigError(std::string("expression error: ") + e.what());
  }

  if (!cfg.flow.group.empty()) {
    const GroupAction action = build_group(mesh, cfg.flow.group);
    const double defect = invariance_defect(mesh, action, f);
    if (!(defect <= 1e-12)) {
      throw ConfigError("f is not invariant under the configured group "
                        "(defect " + format_g17(defect) + ")");
    }
  }
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& source_name) {
  detail::ConfigReader reader(source_name, text);

  ExperimentConfig cfg;
  if (!reader.preset().empty()) {
    try {
      apply_preset(reader.preset(), cfg);
    } catch (const ConfigError& e) {
      throw reader.error(reader.preset_line(), e.what());
    }
  }

  struct MeshStaging {
    std::optional<MeshKind> kind;
    std::optional<std::pair<int, int>> n;        // value, line
    std::optional<std::pair<int, int>> n_theta;  // value, line
    std::optional<std::pair<int, int>> n_phi;    // value, line
  } staged;

  using detail::config_bool;
  using detail::config_double;
  using detail::config_expr;
  using detail::config_int;

  for (const auto& a : reader.assignments()) {
    const int ln = a.lineno;
    const std::string& k = a.key;
    const std::string& v = a.value;
    if (a.section == "mesh") {
      if (k == "kind") {
        if (v == "torus") {
          staged.kind = MeshKind::Torus;
        } else if (v == "sphere") {
          staged.kind = MeshKind::Sphere;
        } else {
          throw reader.error(ln, "kind must be torus or sphere");
        }
      } else if (k == "n") {
        staged.n = {config_int(reader, ln, k, v), ln};
      } else if (k == "n_theta") {
        staged.n_theta = {config_int(reader, ln, k, v), ln};
      } else if (k == "n_phi") {
        staged.n_phi = {config_int(reader, ln, k, v), ln};
      } else {
        throw reader.error(ln, "unknown key '" + k + "' in [mesh]");
      }
    } else if (a.section == "flow") {
      if (k == "rho") {
        cfg.flow.rho = config_double(reader, ln, k, v);
      } else if (k == "f") {
        cfg.flow.f_expr = config_expr(reader, ln, k, v);
      } else if (k == "u0") {
        cfg.flow.u0_expr = config_expr(reader, ln, k, v);
      } else if (k == "dt_init") {
        cfg.flow.dt_init = config_double(reader, ln, k, v);
      } else if (k == "dt_min") {
        cfg.flow.dt_min = config_double(reader, ln, k, v);
      } else if (k == "dt_max") {
        cfg.flow.dt_max = config_double(reader, ln, k, v);
      } else if (k == "cfl_safety") {
        cfg.flow.cfl_safety = config_double(reader, ln, k, v);
      } else if (k == "residual_tol") {
        cfg.flow.residual_tol = config_double(reader, ln, k, v);
      } else if (k == "t_max") {
        cfg.flow.t_max = config_double(reader, ln, k, v);
      } else if (k == "record_every") {
        cfg.flow.record_every = config_int(reader, ln, k, v);
      } else if (k == "snapshot_every") {
        cfg.flow.snapshot_every = config_int(reader, ln, k, v);
      } else if (k == "symmetrize_each_step") {
        cfg.flow.symmetrize_each_step = config_bool(reader, ln, k, v);
      } else if (k == "mass_project_each_step") {
        cfg.flow.mass_project_each_step = config_bool(reader, ln, k, v);
      } else {
        throw reader.error(ln, "unknown key '" + k + "' in [flow]");
      }
    } else if (a.section == "group") {
      if (k == "generators") {
        try {
          cfg.flow.group = parse_generators(v);
        } catch (const ConfigError& e) {
          throw reader.error(ln, e.what());
        }
      } else {
        throw reader.error(ln, "unknown key '" + k + "' in [group]");
      }
    } else if (a.section == "newton") {
      if (k == "continuation_steps") {
        cfg.newton.rho_continuation_steps = config_int(reader, ln, k, v);
      } else if (k == "tol") {
        cfg.newton.newton_tol = config_double(reader, ln, k, v);
      } else if (k == "max_iters") {
        cfg.newton.max_iters = config_int(reader, ln, k, v);
      } else if (k == "damping") {
        cfg.newton.damping = config_double(reader, ln, k, v);
      } else if (k == "linear_tol") {
        cfg.newton.linear_tol = config_double(reader, ln, k, v);
      } else {
        throw reader.error(ln, "unknown key '" + k + "' in [newton]");
      }
    } else if (a.section == "output") {
      if (k == "dir") {
        cfg.output_dir = v;
      } else {
        throw reader.error(ln, "unknown key '" + k + "' in [output]");
      }
    }
  }

  if (staged.kind) cfg.flow.mesh.kind = *staged.kind;
  if (cfg.flow.mesh.kind == MeshKind::Torus) {
    if (staged.n_theta) {
      throw reader.error(staged.n_theta->second,
                         "n_theta applies to sphere meshes; use n for the torus");
    }
    if (staged.n_phi) {
      throw reader.error(staged.n_phi->second,
                         "n_phi applies to sphere meshes; use n for the torus");
    }
    if (staged.n) cfg.flow.mesh.n1 = cfg.flow.mesh.n2 = staged.n->first;
  } else {
    if (staged.n) {
      throw reader.error(staged.n->second,
                         "n applies to torus meshes; use n_theta and n_phi");
    }
    // switching kind without explicit sizes falls back to the sphere default
    if (staged.kind && *staged.kind == MeshKind::Sphere && !staged.n_theta &&
        !staged.n_phi && cfg.preset.empty()) {
      cfg.flow.mesh.n1 = 32;
      cfg.flow.mesh.n2 = 64;
    }
    if (staged.n_theta) cfg.flow.mesh.n1 = staged.n_theta->first;
    if (staged.n_phi) cfg.flow.mesh.n2 = staged.n_phi->first;
  }

  if (const char* env = std::getenv("MEANFLOW_OUTPUT")) {
    if (*env) cfg.output_dir = env;
  }

  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace meanflow

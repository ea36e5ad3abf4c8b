#ifndef FVCR_CONFIG_HPP
#define FVCR_CONFIG_HPP

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fvcr/mesh.hpp"
#include "fvcr/scheme.hpp"
#include "fvcr/solver.hpp"

namespace fvcr {

class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what) {}
};

/// Flat key=value experiment description; every range constraint of the other
/// modules is validated at parse time.
struct RunConfig {
  // mesh
  int mesh_n = 2;              ///< structured cube subdivisions (mesh.file empty)
  std::string mesh_file;       ///< optional Gmsh MSH 2.2 path
  Box extent;                  ///< meshed box for structured grids

  // law
  double law_a_lin = 1.0;
  double law_b = 1.0;
  double law_gamma = 2.0;

  // scheme
  double dt = 1e-2;
  double mu = 0.1;
  SchemeVariant variant = SchemeVariant::Standard;
  double epsilon = 0.0;

  // solver
  double solver_tol = 1e-10;
  int max_picard = 60;
  int max_newton = 0;
  std::string jacobian = "analytic_frozen_upwind";
  double linear_tol = 1e-12;

  // run
  double t_end = 0.1;
  std::string solution = "rest";  ///< rest | mms1 | affine | file
  std::string init_file;          ///< initial data when solution = file
  int output_every = 1;
  bool deterministic = true;

  // output
  std::string out_dir = "out";
  bool write_vtk_files = false;

  SchemeConfig scheme_config() const {
    SchemeConfig c;
    c.dt = dt;
    c.mu = mu;
    c.variant = variant;
    c.epsilon = epsilon;
    c.t_end = t_end;
    c.output_every = output_every;
    return c;
  }

  SolverConfig solver_config() const {
    SolverConfig c;
    c.nonlinear_tol = solver_tol;
    c.max_picard = max_picard;
    c.max_newton = max_newton;
    c.linear_tol = linear_tol;
    c.jacobian_mode = jacobian == "finite_difference"
                          ? JacobianMode::FiniteDifference
                          : JacobianMode::AnalyticFrozenUpwind;
    return c;
  }

  void validate(const std::string& where = "config") const {
    auto fail = [&](const std::string& msg) { throw ConfigError(where, msg); };
    if (mesh_file.empty() && mesh_n < 1) fail("mesh.n must be >= 1");
    if (extent.degenerate()) fail("mesh.extent is degenerate");
    if (!(law_gamma > 1.0)) fail("law.gamma must be > 1");
    if (law_a_lin < 0.0 || law_b < 0.0) fail("law coefficients must be >= 0");
    if (law_a_lin == 0.0 && law_b == 0.0) fail("law.a_lin and law.b both zero");
    if (!(dt > 0.0)) fail("scheme.dt must be > 0");
    if (!(mu > 0.0)) fail("scheme.mu must be > 0");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) fail("scheme.epsilon must be in [0,1)");
    if (!(solver_tol > 0.0)) fail("solver.tol must be > 0");
    if (!(linear_tol > 0.0)) fail("solver.linear_tol must be > 0");
    if (max_picard < 1) fail("solver.max_picard must be >= 1");
    if (max_newton < 0) fail("solver.max_newton must be >= 0");
    if (jacobian != "analytic_frozen_upwind" && jacobian != "finite_difference")
      fail("solver.jacobian must be analytic_frozen_upwind or finite_difference");
    if (!(t_end > 0.0)) fail("run.t_end must be > 0");
    if (output_every < 1) fail("run.output_every must be >= 1");
    if (solution != "rest" && solution != "mms1" && solution != "affine" &&
        solution != "file")
      fail("run.solution must be rest, mms1, affine or file");
    if (solution == "file" && init_file.empty())
      fail("run.solution = file requires run.init_file");
  }
};

inline SchemeVariant parse_variant(const std::string& s, const std::string& where) {
  if (s == "standard") return SchemeVariant::Standard;
  if (s == "stabilized") return SchemeVariant::Stabilized;
  if (s == "modified_upwind") return SchemeVariant::ModifiedUpwind;
  throw ConfigError(where, "unknown scheme.variant '" + s + "'");
}

inline RunConfig parse_config_stream(std::istream& in, const std::string& where) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  auto loc = [&]() { return where + ":" + std::to_string(lineno); };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(loc(), "expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    auto as_double = [&](const std::string& v) {
      try {
        size_t pos;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw ConfigError(loc(), "cannot parse number '" + v + "' for " + key);
      }
    };
    auto as_int = [&](const std::string& v) {
      const double d = as_double(v);
      return static_cast<int>(d);
    };
    auto as_bool = [&](const std::string& v) -> bool {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw ConfigError(loc(), "cannot parse boolean '" + v + "' for " + key);
    };

    if (key == "mesh.n") cfg.mesh_n = as_int(val);
    else if (key == "mesh.file") cfg.mesh_file = val;
    else if (key == "mesh.extent") {
      std::istringstream es(val);
      std::string tok;
      double v[6];
      for (int i = 0; i < 6; ++i) {
        if (!std::getline(es, tok, ','))
          throw ConfigError(loc(), "mesh.extent needs 6 comma-separated numbers");
        v[i] = as_double(tok);
      }
      cfg.extent.lo = Vec3(v[0], v[1], v[2]);
      cfg.extent.hi = Vec3(v[3], v[4], v[5]);
    }
    else if (key == "law.a_lin") cfg.law_a_lin = as_double(val);
    else if (key == "law.b") cfg.law_b = as_double(val);
    else if (key == "law.gamma") cfg.law_gamma = as_double(val);
    else if (key == "scheme.dt") cfg.dt = as_double(val);
    else if (key == "scheme.mu") cfg.mu = as_double(val);
    else if (key == "scheme.variant") cfg.variant = parse_variant(val, loc());
    else if (key == "scheme.epsilon") cfg.epsilon = as_double(val);
    else if (key == "solver.tol") cfg.solver_tol = as_double(val);
    else if (key == "solver.max_picard") cfg.max_picard = as_int(val);
    else if (key == "solver.max_newton") cfg.max_newton = as_int(val);
    else if (key == "solver.jacobian") cfg.jacobian = val;
    else if (key == "solver.linear_tol") cfg.linear_tol = as_double(val);
    else if (key == "run.t_end") cfg.t_end = as_double(val);
    else if (key == "run.solution") cfg.solution = val;
    else if (key == "run.init_file") cfg.init_file = val;
    else if (key == "run.output_every") cfg.output_every = as_int(val);
    else if (key == "run.deterministic") cfg.deterministic = as_bool(val);
    else if (key == "out.dir") cfg.out_dir = val;
    else if (key == "out.vtk") cfg.write_vtk_files = as_bool(val);
    else throw ConfigError(loc(), "unknown key '" + key + "'");
  }
  cfg.validate(where);
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  return parse_config_stream(in, path);
}

inline void write_config(const RunConfig& cfg, std::ostream& out) {
  out.precision(17);
  out << "mesh.n = " << cfg.mesh_n << "\n";
  if (!cfg.mesh_file.empty()) out << "mesh.file = " << cfg.mesh_file << "\n";
  out << "mesh.extent = " << cfg.extent.lo[0] << "," << cfg.extent.lo[1] << ","
      << cfg.extent.lo[2] << "," << cfg.extent.hi[0] << "," << cfg.extent.hi[1]
      << "," << cfg.extent.hi[2] << "\n";
  out << "law.a_lin = " << cfg.law_a_lin << "\n";
  out << "law.b = " << cfg.law_b << "\n";
  out << "law.gamma = " << cfg.law_gamma << "\n";
  out << "scheme.dt = " << cfg.dt << "\n";
  out << "scheme.mu = " << cfg.mu << "\n";
  out << "scheme.variant = " << to_string(cfg.variant) << "\n";
  out << "scheme.epsilon = " << cfg.epsilon << "\n";
  out << "solver.tol = " << cfg.solver_tol << "\n";
  out << "solver.max_picard = " << cfg.max_picard << "\n";
  out << "solver.max_newton = " << cfg.max_newton << "\n";
  out << "solver.jacobian = " << cfg.jacobian << "\n";
  out << "solver.linear_tol = " << cfg.linear_tol << "\n";
  out << "run.t_end = " << cfg.t_end << "\n";
  out << "run.solution = " << cfg.solution << "\n";
  if (!cfg.init_file.empty()) out << "run.init_file = " << cfg.init_file << "\n";
  out << "run.output_every = " << cfg.output_every << "\n";
  out << "run.deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
  out << "out.dir = " << cfg.out_dir << "\n";
  out << "out.vtk = " << (cfg.write_vtk_files ? "true" : "false") << "\n";
}

inline void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path, "cannot open file for writing");
  write_config(cfg, out);
}

}  // namespace fvcr

#endif

#ifndef FVCR_RUN_HPP
#define FVCR_RUN_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "fvcr/config.hpp"
#include "fvcr/diagnostics.hpp"
#include "fvcr/manufactured.hpp"
#include "fvcr/msh_io.hpp"
#include "fvcr/solver.hpp"
#include "fvcr/vtk_io.hpp"

namespace fvcr {

inline Mesh build_mesh(const RunConfig& cfg) {
  if (!cfg.mesh_file.empty()) return import_msh(cfg.mesh_file);
  return Mesh::structured_cube(cfg.mesh_n, cfg.extent);
}

/// Initial data file: "rho" then one value per cell, "u" then one triple per
/// interior face (mesh ordering).
inline StepState read_initial_data(const std::string& path, const Mesh& mesh) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open initial data file");
  std::string tag;
  StepState s;
  s.rho = ScalarCellField(mesh);
  s.u = CRVectorField(mesh, true);
  if (!(in >> tag) || tag != "rho")
    throw ConfigError(path, "expected 'rho' section");
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (!(in >> s.rho[c]))
      throw ConfigError(path, "missing density value for cell " + std::to_string(c));
  if (!(in >> tag) || tag != "u") throw ConfigError(path, "expected 'u' section");
  for (int k = 0; k < mesh.n_interior_faces(); ++k) {
    Vec3 v;
    if (!(in >> v[0] >> v[1] >> v[2]))
      throw ConfigError(path, "missing velocity triple for interior face " +
                                  std::to_string(k));
    s.u.dofs[mesh.interior_faces()[k]] = v;
  }
  s.validate();
  return s;
}

struct RunResult {
  bool converged = false;
  bool invariants_ok = false;
  int steps_taken = 0;
  int failure_step = -1;
  std::string failure_reason;

  EnergyLedger ledger;
  StepState final_state;
  double initial_mass = 0.0;
  double max_mass_drift = 0.0;  ///< max relative |M_n - M_0| / M_0
  double min_density = 0.0;
  bool has_exact = false;
  bool reference_satisfies_bc = true;
  double sup_rel_energy = 0.0;
  ErrorFunctional error_functional;
  double grad_energy_cum = 0.0;   ///< dt sum_n sum_K int |grad u^n|^2 (no mu)
  double sup_rho_Lgamma = 0.0;    ///< sup_n ||rho^n||_{L^gamma}
  std::vector<std::string> violations;

  double error_value() const { return error_functional.value(); }
};

/// Executes one configured run: initialization, the implicit time loop,
/// per-step diagnostics and invariant checks, and the on-disk artifacts
/// (ledger CSV, optional VTK series, JSON summary, config echo).
inline RunResult run(const RunConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const Mesh mesh = build_mesh(cfg);
  const PressureLaw law = make_law(cfg.law_a_lin, cfg.law_b, cfg.law_gamma);
  SchemeConfig scheme_cfg = cfg.scheme_config();
  const SolverConfig solver_cfg = cfg.solver_config();

  std::optional<ManufacturedSolution> sol;
  RunResult out;
  StepState state;
  state.n = 0;
  state.time = 0.0;

  if (cfg.solution == "file") {
    state = read_initial_data(cfg.init_file, mesh);
    state.n = 0;
    state.time = 0.0;
  } else {
    sol = make_builtin_solution(cfg.solution);
    out.has_exact = true;
    out.reference_satisfies_bc = sol->zero_boundary_velocity;
    if (sol->zero_boundary_velocity) {
      double bmax = 0.0;
      for (double t : {0.0, 0.5 * cfg.t_end, cfg.t_end})
        bmax = std::max(bmax, sol->boundary_velocity_max(mesh, t));
      if (bmax > 1e-12)
        throw ConfigError(cfg.solution, "manufactured velocity violates the "
                                        "boundary condition, max |V| = " +
                                            std::to_string(bmax));
    } else if (log) {
      *log << "note: reference '" << sol->name
           << "' does not satisfy the no-slip boundary condition; error decay "
              "is not expected\n";
    }
    if (cfg.solution != "rest") scheme_cfg.forcing = sol->make_forcing(law, cfg.mu);
    state.rho = project_Q(mesh, [&](const Vec3& x) { return sol->r(0.0, x); });
    state.u = project_CR(mesh, [&](const Vec3& x) { return sol->V(0.0, x); }, true);
    state.validate();
  }

  const ResidualScales scales = ResidualScales::from_state(state);
  const int n_steps = std::max(1, static_cast<int>(std::llround(cfg.t_end / cfg.dt)));

  std::optional<ExactSolution> exact;
  if (sol) exact = sol->exact();

  out.initial_mass = total_mass(state.rho, mesh);
  out.min_density = state.rho.values.minCoeff();

  auto reference_state = [&](double t) {
    ScalarCellField rr = project_Q(mesh, [&](const Vec3& x) { return sol->r(t, x); });
    CRVectorField ru =
        project_CR(mesh, [&](const Vec3& x) { return sol->V(t, x); }, true);
    return std::make_pair(std::move(rr), std::move(ru));
  };

  auto append_row = [&](const StepState& s, const LedgerRow& prev_row,
                        double dtime_inc, double dspace_inc, double stab_inc) {
    LedgerRow row;
    row.time = s.time;
    row.mass = total_mass(s.rho, mesh);
    row.kinetic = kinetic_energy(s.rho, s.u, mesh);
    row.internal = internal_energy(s.rho, law, mesh);
    row.viscous_cum = prev_row.viscous_cum +
                      (s.n > 0 ? cfg.dt * viscous_dissipation_rate(s.u, mesh, cfg.mu)
                               : 0.0);
    row.d_time_u = prev_row.d_time_u + dtime_inc;
    row.d_space_u = prev_row.d_space_u + dspace_inc;
    row.stab_disp = prev_row.stab_disp + stab_inc;
    if (exact) {
      const auto ref = reference_state(s.time);
      row.rel_energy = relative_energy(s, ref.first, ref.second, law, mesh);
      const double step_val = error_functional_step(s, *exact, s.time, law, mesh);
      const double grad_inc =
          s.n > 0 ? grad_error_increment(s, *exact, s.time, mesh, cfg.dt) : 0.0;
      out.error_functional.observe(step_val, grad_inc);
      row.m1_functional = step_val;
      out.sup_rel_energy = std::max(out.sup_rel_energy, row.rel_energy);
    }
    out.ledger.rows.push_back(row);
    return row;
  };

  LedgerRow row = append_row(state, LedgerRow{}, 0.0, 0.0, 0.0);

  // output setup
  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream echo(out_dir / "config_used.cfg");
    write_config(cfg, echo);
  }
  auto vtk_path = [&](int n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "state_%06d.vtk", n);
    return (out_dir / buf).string();
  };
  if (cfg.write_vtk_files) write_vtk(state, mesh, vtk_path(0));

  const double gamma = law.gamma();
  auto rho_Lgamma = [&](const ScalarCellField& r) {
    double s = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c)
      s += mesh.cell(c).volume * std::pow(r[c], gamma);
    return std::pow(s, 1.0 / gamma);
  };
  out.sup_rho_Lgamma = rho_Lgamma(state.rho);

  // With a manufactured mass source the discrete identity is
  //   M_n = M_0 + dt sum_k sum_K |K| g_K(t_k);
  // without sources it reduces to plain conservation.
  double expected_mass = out.initial_mass;
  auto source_mass_rate = [&](double t) {
    double s = 0.0;
    if (scheme_cfg.forcing.mass_source)
      for (int c = 0; c < mesh.n_cells(); ++c)
        s += mesh.cell(c).volume * cell_mean(mesh, c, [&](const Vec3& x) {
          return scheme_cfg.forcing.mass_source(t, x);
        });
    return s;
  };

  out.converged = true;
  for (int n = 1; n <= n_steps; ++n) {
    StepState prev = state;
    try {
      AdvanceResult adv = advance(prev, mesh, law, scheme_cfg, solver_cfg, &scales);
      state = std::move(adv.state);
      if (log)
        *log << "step " << n << " t=" << state.time << " picard="
             << adv.report.picard_iterations << " newton="
             << adv.report.newton_iterations << " res="
             << adv.report.final_residual << "\n";
    } catch (const SolverError& err) {
      out.converged = false;
      out.failure_step = n;
      out.failure_reason = err.what();
      break;
    }
    out.steps_taken = n;

    const double dtime_inc = d_time_increment(prev, state, mesh);
    const double dspace_inc = d_space_increment(state, mesh, cfg.dt);
    const double stab_inc =
        scheme_cfg.variant == SchemeVariant::Stabilized
            ? stab_dissipation_increment(state.rho, mesh, cfg.dt, cfg.epsilon)
            : 0.0;
    row = append_row(state, row, dtime_inc, dspace_inc, stab_inc);

    out.min_density = std::min(out.min_density, state.rho.values.minCoeff());
    const double drift =
        std::abs(row.mass - out.initial_mass) / std::abs(out.initial_mass);
    out.max_mass_drift = std::max(out.max_mass_drift, drift);
    out.grad_energy_cum += cfg.dt * viscous_dissipation_rate(state.u, mesh, 1.0);
    out.sup_rho_Lgamma = std::max(out.sup_rho_Lgamma, rho_Lgamma(state.rho));

    if (drift > 1e-11)
      out.violations.push_back("mass drift " + std::to_string(drift) + " at step " +
                               std::to_string(n));
    if (dtime_inc < 0.0 || dspace_inc < 0.0 || stab_inc < 0.0)
      out.violations.push_back("negative dissipation at step " + std::to_string(n));
    if (!std::isfinite(row.kinetic) || !std::isfinite(row.internal) ||
        !std::isfinite(out.grad_energy_cum))
      out.violations.push_back("non-finite diagnostics at step " + std::to_string(n));

    if (cfg.write_vtk_files && (n % cfg.output_every == 0 || n == n_steps))
      write_vtk(state, mesh, vtk_path(n));
  }

  out.final_state = state;
  out.invariants_ok = out.violations.empty() && out.min_density > 0.0;

  write_csv(out.ledger, (out_dir / "ledger.csv").string());
  {
    nlohmann::json j;
    j["solution"] = cfg.solution;
    j["variant"] = to_string(cfg.variant);
    j["mesh_n"] = cfg.mesh_n;
    j["cells"] = mesh.n_cells();
    j["h"] = mesh.h();
    j["dt"] = cfg.dt;
    j["steps"] = out.steps_taken;
    j["converged"] = out.converged;
    j["invariants_ok"] = out.invariants_ok;
    j["max_mass_drift"] = out.max_mass_drift;
    j["min_density"] = out.min_density;
    j["sup_rel_energy"] = out.sup_rel_energy;
    j["error_functional"] = out.error_value();
    j["grad_energy_cum"] = out.grad_energy_cum;
    j["sup_rho_Lgamma"] = out.sup_rho_Lgamma;
    if (!out.converged) {
      j["failure"] = {{"step", out.failure_step}, {"reason", out.failure_reason}};
    }
    if (!out.violations.empty()) j["violations"] = out.violations;
    std::ofstream js(out_dir / "summary.json");
    js << j.dump(2) << "\n";
  }
  return out;
}

// ----------------------------------------------------------------------- study

enum class DtCoupling { QuadraticInH, LinearInH };

struct StudyLevel {
  int n = 0;
  double h = 0.0;
  double dt = 0.0;
  double sup_step = 0.0;
  double cum_grad = 0.0;
  double error = 0.0;
  bool at_floor = false;
};

struct StudyResult {
  std::vector<StudyLevel> levels;
  std::vector<double> orders;  ///< pairwise EOC of the error functional
  bool eoc_meaningful = true;
  std::string flag_reason;
  double theoretical_exponent = 0.0;
};

/// Runs the configured problem on a family of structured meshes with the time
/// step coupled to h, and measures the decay of the error functional
/// (sup-in-n step part plus cumulative broken-H1 part). Levels whose error
/// sits at the solver floor make the EOC meaningless and flag the study.
inline StudyResult convergence_study(const RunConfig& base,
                                     const std::vector<int>& levels,
                                     DtCoupling coupling,
                                     std::ostream* log = nullptr) {
  if (levels.size() < 2)
    throw std::invalid_argument("convergence_study: need at least 2 levels");
  StudyResult res;
  const double p = coupling == DtCoupling::QuadraticInH ? 2.0 : 1.0;

  for (size_t i = 0; i < levels.size(); ++i) {
    RunConfig cfg = base;
    cfg.mesh_n = levels[i];
    cfg.dt = base.dt * std::pow(double(base.mesh_n) / levels[i], p);
    cfg.out_dir = base.out_dir + "/level_" + std::to_string(levels[i]);
    RunResult r = run(cfg, log);
    if (!r.converged)
      throw SolverError(SolverFailure::Nonconvergence,
                        "study level n=" + std::to_string(levels[i]) +
                            " failed at step " + std::to_string(r.failure_step) +
                            ": " + r.failure_reason);
    StudyLevel lev;
    lev.n = levels[i];
    lev.h = std::sqrt(3.0) * (base.extent.hi - base.extent.lo).maxCoeff() /
            levels[i];
    lev.dt = cfg.dt;
    lev.sup_step = r.error_functional.sup_step;
    lev.cum_grad = r.error_functional.cumulative_grad;
    lev.error = r.error_value();
    lev.at_floor = lev.error <= 1e3 * base.solver_tol;
    if (!r.reference_satisfies_bc) {
      res.eoc_meaningful = false;
      res.flag_reason = "reference violates the no-slip boundary condition";
    }
    if (lev.at_floor) {
      res.eoc_meaningful = false;
      res.flag_reason = "error at solver floor on level n=" + std::to_string(lev.n);
    }
    res.levels.push_back(lev);
    if (log)
      *log << "level n=" << lev.n << " h=" << lev.h << " dt=" << lev.dt
           << " error=" << lev.error << (lev.at_floor ? " (floor)" : "") << "\n";
  }

  const PressureLaw law = make_law(base.law_a_lin, base.law_b, base.law_gamma);
  res.theoretical_exponent =
      base.variant == SchemeVariant::Standard
          ? theoretical_rate(law.gamma())
          : theoretical_rate_stabilized(law.gamma(), base.epsilon);

  if (res.eoc_meaningful) {
    std::vector<double> errs, hs;
    for (const auto& l : res.levels) {
      errs.push_back(l.error);
      hs.push_back(l.h);
    }
    res.orders = eoc(errs, hs);
  }
  return res;
}

// -------------------------------------------------------------- check command

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Invariant suite run by the `check` subcommand: mesh validity, quadrature
/// exactness, constitutive identities, projection properties and the boundary
/// compatibility of the configured solution.
inline std::vector<CheckResult> run_invariant_suite(const RunConfig& cfg) {
  std::vector<CheckResult> out;
  auto push = [&](const std::string& name, bool ok, const std::string& detail) {
    out.push_back({name, ok, detail});
  };

  const Mesh mesh = build_mesh(cfg);

  {  // cell closure
    double worst = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      Vec3 s = Vec3::Zero();
      double asum = 0.0;
      const CellRecord& cr = mesh.cell(c);
      for (int k = 0; k < 4; ++k) {
        const FaceRecord& fr = mesh.face(cr.faces[k]);
        s += fr.area * cr.face_sign[k] * fr.normal;
        asum += fr.area;
      }
      worst = std::max(worst, s.lpNorm<Eigen::Infinity>() / asum);
    }
    push("mesh.closure", worst <= 1e-12, "max scaled defect " + std::to_string(worst));
  }
  {
    const RegularityReport r = mesh.regularity_report();
    push("mesh.regularity", r.min_inradius_over_diam > 0.0,
         "inradius/diam in [" + std::to_string(r.min_inradius_over_diam) + ", " +
             std::to_string(r.max_inradius_over_diam) + "]");
    if (mesh.analytic_volume() > 0.0) {
      const double err =
          std::abs(mesh.total_volume() - mesh.analytic_volume()) / mesh.analytic_volume();
      push("mesh.volume", err <= 1e-12, "relative defect " + std::to_string(err));
    }
  }
  {  // quadrature exactness, degree <= 3 monomials
    double worst = 0.0;
    const CellRule& cr = CellRule::degree3();
    for (int p = 0; p <= 3; ++p)
      for (int q = 0; p + q <= 3; ++q)
        for (int r2 = 0; p + q + r2 <= 3; ++r2) {
          double s = 0.0;
          for (size_t k = 0; k < cr.points.size(); ++k) {
            const auto& lam = cr.points[k];
            // reference tet (0, e1, e2, e3): x = lam1, y = lam2, z = lam3
            s += cr.weights[k] * std::pow(lam[1], p) * std::pow(lam[2], q) *
                 std::pow(lam[3], r2);
          }
          auto fact = [](int n) { double f = 1; for (int i = 2; i <= n; ++i) f *= i; return f; };
          const double exact =
              6.0 * fact(p) * fact(q) * fact(r2) / fact(p + q + r2 + 3);
          worst = std::max(worst, std::abs(s - exact));
        }
    const FaceRule& fr = FaceRule::degree3();
    for (int p = 0; p <= 3; ++p)
      for (int q = 0; p + q <= 3; ++q) {
        double s = 0.0;
        for (size_t k = 0; k < fr.points.size(); ++k)
          s += fr.weights[k] * std::pow(fr.points[k][1], p) *
               std::pow(fr.points[k][2], q);
        auto fact = [](int n) { double f = 1; for (int i = 2; i <= n; ++i) f *= i; return f; };
        const double exact = 2.0 * fact(p) * fact(q) / fact(p + q + 2);
        worst = std::max(worst, std::abs(s - exact));
      }
    push("quadrature.exactness", worst <= 1e-14, "max defect " + std::to_string(worst));
  }
  {  // constitutive identities
    const PressureLaw law = make_law(cfg.law_a_lin, cfg.law_b, cfg.law_gamma);
    double worst = 0.0;
    bool convex = true;
    for (double lg = -6.0; lg <= 6.0; lg += 0.25) {
      const double rho = std::pow(10.0, lg);
      const double res = std::abs(rho * law.dH(rho) - law.H(rho) - law.p(rho));
      worst = std::max(worst, res / (1.0 + law.p(rho)));
      if (!(law.d2H(rho) > 0.0)) convex = false;
    }
    push("law.ode_identity", worst <= 1e-10, "max scaled residual " + std::to_string(worst));
    push("law.convexity", convex, "H'' sampled on the log grid");
  }
  {  // P1 reproduction on this mesh
    const Mat3 A = (Mat3() << 0.3, -0.1, 0.2, 0.0, 0.5, -0.2, 0.1, 0.0, -0.4).finished();
    const Vec3 b(0.1, -0.7, 0.3);
    auto affine = [&](const Vec3& x) { return Vec3(A * x + b); };
    CRVectorField pv = project_CR(mesh, affine, false);
    double worst = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const Vec3 x = mesh.cell(c).centroid;
      worst = std::max(worst, (pv.eval(c, x) - affine(x)).lpNorm<Eigen::Infinity>());
    }
    push("spaces.p1_reproduction", worst <= 1e-12, "max defect " + std::to_string(worst));
  }
  {  // jump means vanish for CR fields
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    CRVectorField v(mesh, false);
    for (auto& d : v.dofs) d = Vec3(dist(rng), dist(rng), dist(rng));
    double worst = 0.0;
    for (int f : mesh.interior_faces())
      worst = std::max(worst,
                       jump_integral(v, f).lpNorm<Eigen::Infinity>() / mesh.face(f).area);
    push("spaces.jump_mean_zero", worst <= 1e-12, "max scaled defect " + std::to_string(worst));
  }
  if (cfg.solution != "file") {
    const ManufacturedSolution sol = make_builtin_solution(cfg.solution);
    if (sol.zero_boundary_velocity) {
      double bmax = 0.0;
      for (double t : {0.0, 0.5 * cfg.t_end, cfg.t_end})
        bmax = std::max(bmax, sol.boundary_velocity_max(mesh, t));
      push("solution.boundary_compatibility", bmax <= 1e-12,
           "max boundary |V| = " + std::to_string(bmax));
    } else {
      push("solution.boundary_compatibility", true,
           "reference declared without the no-slip constraint; skipped");
    }
  }
  return out;
}

}  // namespace fvcr

#endif

#ifndef FVCR_DIAGNOSTICS_HPP
#define FVCR_DIAGNOSTICS_HPP

#include <array>
#include <fstream>
#include <functional>
#include <vector>

#include "fvcr/scheme.hpp"

namespace fvcr {

// --------------------------------------------------------------- basic sums

/// Total mass sum_K |K| rho_K; conserved exactly by the scheme.
inline double total_mass(const ScalarCellField& rho, const Mesh& mesh) {
  double m = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) m += mesh.cell(c).volume * rho[c];
  return m;
}

/// Kinetic part (1/2) sum |K| rho_K |uhat_K|^2.
inline double kinetic_energy(const ScalarCellField& rho, const CRVectorField& u,
                             const Mesh& mesh) {
  double e = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    e += 0.5 * mesh.cell(c).volume * rho[c] * u.cell_mean(c).squaredNorm();
  return e;
}

/// Internal part sum |K| H(rho_K).
inline double internal_energy(const ScalarCellField& rho, const PressureLaw& law,
                              const Mesh& mesh) {
  double e = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    e += mesh.cell(c).volume * law.H(rho[c]);
  return e;
}

inline double total_energy(const StepState& s, const PressureLaw& law,
                           const Mesh& mesh) {
  return kinetic_energy(s.rho, s.u, mesh) + internal_energy(s.rho, law, mesh);
}

/// Instantaneous viscous dissipation mu sum int |grad u|^2 + (mu/3) sum int |div u|^2
/// (multiply by dt for the per-step increment).
inline double viscous_dissipation_rate(const CRVectorField& u, const Mesh& mesh,
                                       double mu) {
  double d = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Mat3 g = u.cell_gradient(c);
    d += mesh.cell(c).volume *
         (mu * g.squaredNorm() + (mu / 3.0) * g.trace() * g.trace());
  }
  return d;
}

// -------------------------------------------------------- dissipation terms

/// Time-difference dissipation of one step:
///   sum_K |K| rho^{n-1}_K |uhat^n_K - uhat^{n-1}_K|^2 / 2.
inline double d_time_increment(const StepState& prev, const StepState& cur,
                               const Mesh& mesh) {
  double d = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    d += 0.5 * mesh.cell(c).volume * prev.rho[c] *
         (cur.u.cell_mean(c) - prev.u.cell_mean(c)).squaredNorm();
  return d;
}

/// Upwind space dissipation of one step:
///   dt sum_{interior faces} |sigma| rho^up |uhat_K - uhat_L|^2 / 2 |u_sigma.n|.
inline double d_space_increment(const StepState& cur, const Mesh& mesh, double dt) {
  double d = 0.0;
  for (int f : mesh.interior_faces()) {
    const FaceRecord& fr = mesh.face(f);
    const double un = cur.u.dofs[f].dot(fr.normal);
    const double rho_up = un > 0.0 ? cur.rho[fr.owner] : cur.rho[fr.neighbor];
    const Vec3 du = cur.u.cell_mean(fr.owner) - cur.u.cell_mean(fr.neighbor);
    d += 0.5 * dt * fr.area * rho_up * du.squaredNorm() * std::abs(un);
  }
  return d;
}

/// Density-jump dissipation contributed by the stabilization terms:
///   dt h^(1-eps) sum |sigma| [rho]^2; zero for the plain scheme.
inline double stab_dissipation_increment(const ScalarCellField& rho,
                                         const Mesh& mesh, double dt,
                                         double epsilon) {
  const double hf = std::pow(mesh.h(), 1.0 - epsilon);
  double d = 0.0;
  for (int f : mesh.interior_faces()) {
    const FaceRecord& fr = mesh.face(f);
    const double j = rho[fr.owner] - rho[fr.neighbor];
    d += fr.area * j * j;
  }
  return dt * hf * d;
}

struct DissipationTotals {
  double d_time = 0.0;
  double d_space = 0.0;
};

/// Cumulative dissipation terms over a state history (>= 2 states).
inline DissipationTotals dissipation_terms(const std::vector<StepState>& history,
                                           const Mesh& mesh, double dt) {
  if (history.size() < 2)
    throw std::invalid_argument("dissipation_terms: need at least two states");
  DissipationTotals t;
  for (size_t n = 1; n < history.size(); ++n) {
    t.d_time += d_time_increment(history[n - 1], history[n], mesh);
    t.d_space += d_space_increment(history[n], mesh, dt);
  }
  return t;
}

// ----------------------------------------------------------- relative energy

/// Discrete relative energy
///   sum_K |K| ( rho_K |uhat_K - vhat_K|^2 + E(rho_K | z_K) )
/// against a reference pair (z, v); nonnegative, zero iff the compared
/// quantities coincide.
inline double relative_energy(const StepState& s, const ScalarCellField& ref_rho,
                              const CRVectorField& ref_u, const PressureLaw& law,
                              const Mesh& mesh) {
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (!(ref_rho[c] > 0.0))
      throw std::invalid_argument("relative_energy: reference density must be > 0");
  double e = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Vec3 du = s.u.cell_mean(c) - ref_u.cell_mean(c);
    e += mesh.cell(c).volume *
         (s.rho[c] * du.squaredNorm() + E_rel(s.rho[c], ref_rho[c], law));
  }
  return e;
}

// --------------------------------------------------------- error functional

/// Exact reference solution evaluators used by the error functional.
struct ExactSolution {
  std::function<double(double, const Vec3&)> r;
  std::function<Vec3(double, const Vec3&)> V;
  std::function<Mat3(double, const Vec3&)> grad_V;  ///< (grad V)_{ij} = dV_i/dx_j
};

/// Per-step value of the first part of the error functional,
///   sum_K |K| [ 1/2 rho_K |uhat_K - Vhat_K(t)|^2 + E(rho_K | rhat_K(t)) ],
/// comparing the cellwise-constant state against the cell means of the exact
/// solution (computed by cell quadrature). A P0/P1-reproduced exact state
/// therefore gives exactly zero.
inline double error_functional_step(const StepState& s, const ExactSolution& ex,
                                    double t, const PressureLaw& law,
                                    const Mesh& mesh) {
  double v = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double rhat = cell_mean(mesh, c, [&](const Vec3& x) { return ex.r(t, x); });
    Vec3 vhat = Vec3::Zero();
    {
      const CellRule& rule = CellRule::degree3();
      const auto verts = mesh.cell_vertices(c);
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const auto& lam = rule.points[q];
        vhat += rule.weights[q] * ex.V(t, lam[0] * verts[0] + lam[1] * verts[1] +
                                              lam[2] * verts[2] + lam[3] * verts[3]);
      }
    }
    const Vec3 du = s.u.cell_mean(c) - vhat;
    v += mesh.cell(c).volume *
         (0.5 * s.rho[c] * du.squaredNorm() + E_rel(s.rho[c], rhat, law));
  }
  return v;
}

/// One-step increment of the cumulative broken-H1 velocity error,
///   dt sum_K int_K |grad_h u - grad V(t)|^2.
inline double grad_error_increment(const StepState& s, const ExactSolution& ex,
                                   double t, const Mesh& mesh, double dt) {
  double v = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Mat3 g = s.u.cell_gradient(c);
    v += integrate_cell(mesh, c, [&](const Vec3& x) {
      return (g - ex.grad_V(t, x)).squaredNorm();
    });
  }
  return dt * v;
}

/// Running value of the error functional of a run: sup over steps of the
/// per-step part plus the accumulated gradient error.
struct ErrorFunctional {
  double sup_step = 0.0;
  double cumulative_grad = 0.0;

  void observe(double step_value, double grad_increment) {
    sup_step = std::max(sup_step, step_value);
    cumulative_grad += grad_increment;
  }
  double value() const { return sup_step + cumulative_grad; }
};

// ------------------------------------------------------------------- orders

/// Experimental orders of convergence: log(e_i/e_{i+1}) / log(h_i/h_{i+1}).
inline std::vector<double> eoc(const std::vector<double>& errors,
                               const std::vector<double>& hs) {
  if (errors.size() != hs.size() || errors.size() < 2)
    throw std::invalid_argument("eoc: need matching lists with >= 2 entries");
  for (double e : errors)
    if (!(e > 0.0)) throw std::invalid_argument("eoc: errors must be positive");
  for (size_t i = 1; i < hs.size(); ++i)
    if (!(hs[i] < hs[i - 1]))
      throw std::invalid_argument("eoc: mesh sizes must be strictly decreasing");
  std::vector<double> orders;
  for (size_t i = 1; i < errors.size(); ++i)
    orders.push_back(std::log(errors[i - 1] / errors[i]) /
                     std::log(hs[i - 1] / hs[i]));
  return orders;
}

/// Guaranteed convergence exponent of the plain scheme: a = (2 gamma - 3)/gamma
/// for gamma in [3/2, 2], a = 1/2 above (a = 0 at gamma = 3/2 gives uniform
/// bounds only).
inline double theoretical_rate(double gamma) {
  if (!(gamma >= 1.5)) throw std::invalid_argument("theoretical_rate: gamma >= 3/2");
  return gamma <= 2.0 ? (2.0 * gamma - 3.0) / gamma : 0.5;
}

/// Exponent for the stabilized scheme / modified upwind with parameter eps.
inline double theoretical_rate_stabilized(double gamma, double epsilon) {
  if (!(gamma >= 1.5))
    throw std::invalid_argument("theoretical_rate_stabilized: gamma >= 3/2");
  const double s = 0.5 * (1.0 - epsilon);
  return gamma < 2.0 ? std::min((2.0 * gamma - 3.0) / gamma, s) : s;
}

// ------------------------------------------------------------------- ledger

/// One diagnostics row per time level.
struct LedgerRow {
  double time = 0.0;
  double mass = 0.0;
  double kinetic = 0.0;
  double internal = 0.0;
  double viscous_cum = 0.0;
  double d_time_u = 0.0;    ///< cumulative
  double d_space_u = 0.0;   ///< cumulative
  double rel_energy = 0.0;
  double m1_functional = 0.0;
  double stab_disp = 0.0;   ///< cumulative
};

struct EnergyLedger {
  std::vector<LedgerRow> rows;

  static const std::array<const char*, 10>& columns() {
    static const std::array<const char*, 10> c = {
        "time",     "mass",     "kinetic",    "internal",      "viscous_cum",
        "D_time_u", "D_space_u", "rel_energy", "m1_functional", "stab_disp"};
    return c;
  }
};

inline void write_csv(const EnergyLedger& ledger, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  const auto& cols = EnergyLedger::columns();
  for (size_t i = 0; i < cols.size(); ++i)
    out << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  out.precision(17);
  for (const LedgerRow& r : ledger.rows)
    out << r.time << "," << r.mass << "," << r.kinetic << "," << r.internal << ","
        << r.viscous_cum << "," << r.d_time_u << "," << r.d_space_u << ","
        << r.rel_energy << "," << r.m1_functional << "," << r.stab_disp << "\n";
}

}  // namespace fvcr

#endif

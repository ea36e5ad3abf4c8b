#ifndef FVCR_SCHEME_HPP
#define FVCR_SCHEME_HPP

#include <functional>
#include <optional>

#include "fvcr/fields.hpp"
#include "fvcr/thermo.hpp"

namespace fvcr {

enum class SchemeVariant { Standard, Stabilized, ModifiedUpwind };

inline const char* to_string(SchemeVariant v) {
  switch (v) {
    case SchemeVariant::Standard: return "standard";
    case SchemeVariant::Stabilized: return "stabilized";
    case SchemeVariant::ModifiedUpwind: return "modified_upwind";
  }
  return "?";
}

/// Optional analytic sources: a mass source g (projected to cell means) and a
/// momentum source f (tested against the CR basis). Both evaluated at the new
/// time level of the implicit step.
struct ForcingTerms {
  std::function<double(double, const Vec3&)> mass_source;
  std::function<Vec3(double, const Vec3&)> momentum_source;

  bool any() const { return bool(mass_source) || bool(momentum_source); }
};

/// Which residual terms to assemble. Full() is the scheme; the partial masks
/// exist for oracle tests (pure diffusion, convection-only, ...).
struct TermMask {
  bool time = true;
  bool convection = true;
  bool pressure = true;
  bool viscous = true;
  bool stabilization = true;
  bool forcing = true;

  static TermMask full() { return {}; }
  static TermMask viscous_only() { return {false, false, false, true, false, false}; }
  static TermMask convection_only() { return {false, true, false, false, false, false}; }
};

struct SchemeConfig {
  double dt = 1e-2;
  double mu = 0.1;  ///< shear viscosity; the div-div coefficient is fixed to mu/3
  SchemeVariant variant = SchemeVariant::Standard;
  double epsilon = 0.0;  ///< stabilization exponent, delta = h^(1-epsilon)
  ForcingTerms forcing;
  double t_end = 0.1;
  int output_every = 1;
  TermMask terms;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("SchemeConfig: dt must be > 0");
    if (!(mu > 0.0)) throw std::invalid_argument("SchemeConfig: mu must be > 0");
    if (!(epsilon >= 0.0 && epsilon < 1.0))
      throw std::invalid_argument("SchemeConfig: epsilon must lie in [0,1)");
  }

  /// Stabilization length scale h^(1-epsilon); meaningful for the stabilized
  /// and modified-upwind variants only.
  double delta(double h) const { return std::pow(h, 1.0 - epsilon); }
};

/// The discrete unknown pair (rho^n, u^n).
struct StepState {
  ScalarCellField rho;
  CRVectorField u;
  int n = 0;
  double time = 0.0;

  void validate() const {
    if (!u.zero_trace || !u.trace_is_zero())
      throw std::invalid_argument("StepState: velocity must have zero trace");
    for (int c = 0; c < rho.size(); ++c)
      if (!(rho[c] > 0.0))
        throw std::invalid_argument("StepState: nonpositive density on cell " +
                                    std::to_string(c));
  }
};

// -------------------------------------------------------------------- upwind

/// Upwind coefficients (cK, cL) of the convective face flux
///   flux per unit area = cK q_K + cL q_L,   cK >= 0 >= cL,
/// where un is the normal velocity seen from K. The modified variant averages
/// the two shifted brackets [un +- delta].
struct UpwindCoeffs {
  double cK = 0.0;
  double cL = 0.0;
  double dK = 0.0;  ///< a.e. derivative of cK with respect to un
  double dL = 0.0;  ///< a.e. derivative of cL with respect to un
};

inline UpwindCoeffs upwind_coeffs(double un, SchemeVariant variant, double delta) {
  UpwindCoeffs c;
  if (variant == SchemeVariant::ModifiedUpwind) {
    const double p1 = un + delta, p2 = un - delta;
    c.cK = 0.5 * (std::max(p1, 0.0) + std::max(p2, 0.0));
    c.cL = 0.5 * (std::min(p1, 0.0) + std::min(p2, 0.0));
    c.dK = 0.5 * ((p1 > 0.0 ? 1.0 : 0.0) + (p2 > 0.0 ? 1.0 : 0.0));
    c.dL = 0.5 * ((p1 < 0.0 ? 1.0 : 0.0) + (p2 < 0.0 ? 1.0 : 0.0));
  } else {
    // ties at un = 0 take the L branch
    if (un > 0.0) {
      c.cK = un;
      c.dK = 1.0;
    } else {
      c.cL = un;
      c.dL = 1.0;
    }
  }
  return c;
}

struct UpwindValue {
  double density = 0.0;  ///< upwinded quantity (the flux is authoritative for
                         ///< the modified variant)
  double flux = 0.0;     ///< convective flux per unit face area
};

/// Upwinded density and flux contribution at an interior face with normal
/// velocity un (seen from K).
inline UpwindValue upwind_value(double qK, double qL, double un,
                                SchemeVariant variant, double delta = 0.0) {
  const UpwindCoeffs c = upwind_coeffs(un, variant, delta);
  UpwindValue v;
  v.flux = c.cK * qK + c.cL * qL;
  v.density = (un > 0.0) ? qK : qL;
  return v;
}

// ----------------------------------------------------------------- residuals

/// Per-cell residual of the discrete mass balance
///   |K| (rho_K - rho^{n-1}_K)/dt + sum_{interior faces} |sigma| flux
///   [+ stabilization] - |K| g_K.
/// The scheme's mass equation holds iff the residual vanishes on every cell.
inline Eigen::VectorXd mass_residual(const ScalarCellField& rho_prev,
                                     const ScalarCellField& rho,
                                     const CRVectorField& u, const Mesh& mesh,
                                     const SchemeConfig& cfg, double t_new = 0.0) {
  Eigen::VectorXd res = Eigen::VectorXd::Zero(mesh.n_cells());
  const double delta = cfg.delta(mesh.h());

  if (cfg.terms.time) {
    for (int c = 0; c < mesh.n_cells(); ++c)
      res[c] += mesh.cell(c).volume * (rho[c] - rho_prev[c]) / cfg.dt;
  }

  if (cfg.terms.convection) {
    for (int f : mesh.interior_faces()) {
      const FaceRecord& fr = mesh.face(f);
      const double un = u.dofs[f].dot(fr.normal);
      const UpwindCoeffs c = upwind_coeffs(un, cfg.variant, delta);
      const double flux = fr.area * (c.cK * rho[fr.owner] + c.cL * rho[fr.neighbor]);
      res[fr.owner] += flux;
      res[fr.neighbor] -= flux;
    }
  }

  if (cfg.terms.stabilization && cfg.variant == SchemeVariant::Stabilized) {
    const double hfac = cfg.delta(mesh.h());
    for (int f : mesh.interior_faces()) {
      const FaceRecord& fr = mesh.face(f);
      const double jmp = hfac * fr.area * (rho[fr.owner] - rho[fr.neighbor]);
      res[fr.owner] += jmp;
      res[fr.neighbor] -= jmp;
    }
  }

  if (cfg.terms.forcing && cfg.forcing.mass_source) {
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const double g = cell_mean(mesh, c, [&](const Vec3& x) {
        return cfg.forcing.mass_source(t_new, x);
      });
      res[c] -= mesh.cell(c).volume * g;
    }
  }
  return res;
}

/// Residual of the discrete momentum balance tested against every interior CR
/// basis function phi_sigma e_i; returned as a flat vector indexed by
/// (interior face index)*3 + component.
inline Eigen::VectorXd momentum_residual(
    const ScalarCellField& rho_prev, const CRVectorField& u_prev,
    const ScalarCellField& rho, const CRVectorField& u, const Mesh& mesh,
    const SchemeConfig& cfg, const PressureLaw& law, double t_new = 0.0) {
  const int nif = mesh.n_interior_faces();
  Eigen::VectorXd res = Eigen::VectorXd::Zero(3 * nif);
  const double delta = cfg.delta(mesh.h());

  const CellVectorField uhat = cell_means(u);
  const CellVectorField uhat_prev = cell_means(u_prev);

  // accumulate a per-cell vector G into the cell's interior test functions
  // (whose cell mean is e_i/4)
  auto scatter_cell = [&](int c, const Vec3& G) {
    const CellRecord& cr = mesh.cell(c);
    for (int k = 0; k < 4; ++k) {
      const int ii = mesh.interior_index(cr.faces[k]);
      if (ii >= 0) res.segment<3>(3 * ii) += 0.25 * G;
    }
  };

  if (cfg.terms.time) {
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const Vec3 G = (mesh.cell(c).volume / cfg.dt) *
                     (rho[c] * uhat[c] - rho_prev[c] * uhat_prev[c]);
      scatter_cell(c, G);
    }
  }

  if (cfg.terms.convection) {
    for (int f : mesh.interior_faces()) {
      const FaceRecord& fr = mesh.face(f);
      const double un = u.dofs[f].dot(fr.normal);
      const UpwindCoeffs c = upwind_coeffs(un, cfg.variant, delta);
      const Vec3 flux = fr.area * (c.cK * rho[fr.owner] * uhat[fr.owner] +
                                   c.cL * rho[fr.neighbor] * uhat[fr.neighbor]);
      scatter_cell(fr.owner, flux);
      scatter_cell(fr.neighbor, -flux);
    }
  }

  if (cfg.terms.pressure) {
    for (int f : mesh.interior_faces()) {
      const FaceRecord& fr = mesh.face(f);
      const int ii = mesh.interior_index(f);
      res.segment<3>(3 * ii) -=
          fr.area * (law.p(rho[fr.owner]) - law.p(rho[fr.neighbor])) * fr.normal;
    }
  }

  if (cfg.terms.viscous) {
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellRecord& cr = mesh.cell(c);
      const Mat3 g = u.cell_gradient(c);
      const double div = g.trace();
      for (int k = 0; k < 4; ++k) {
        const int ii = mesh.interior_index(cr.faces[k]);
        if (ii < 0) continue;
        const FaceRecord& ft = mesh.face(cr.faces[k]);
        const Vec3 grad_phi = (ft.area / cr.volume) * cr.face_sign[k] * ft.normal;
        res.segment<3>(3 * ii) +=
            cr.volume * (cfg.mu * (g * grad_phi) + (cfg.mu / 3.0) * div * grad_phi);
      }
    }
  }

  if (cfg.terms.stabilization && cfg.variant == SchemeVariant::Stabilized) {
    for (int f : mesh.interior_faces()) {
      const FaceRecord& fr = mesh.face(f);
      const double w = fr.area * (rho[fr.owner] - rho[fr.neighbor]);
      const Vec3 m = 0.5 * (uhat[fr.owner] + uhat[fr.neighbor]);
      scatter_cell(fr.owner, w * m);
      scatter_cell(fr.neighbor, -(w * m));
    }
  }

  if (cfg.terms.forcing && cfg.forcing.momentum_source) {
    const CellRule& rule = CellRule::degree3();
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const CellRecord& cr = mesh.cell(c);
      const auto verts = mesh.cell_vertices(c);
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const auto& lam = rule.points[q];
        const Vec3 x = lam[0] * verts[0] + lam[1] * verts[1] + lam[2] * verts[2] +
                       lam[3] * verts[3];
        const Vec3 fval = cfg.forcing.momentum_source(t_new, x);
        const double wq = rule.weights[q] * cr.volume;
        for (int k = 0; k < 4; ++k) {
          const int ii = mesh.interior_index(cr.faces[k]);
          if (ii < 0) continue;
          const double phi = 1.0 - 3.0 * lam[k];
          res.segment<3>(3 * ii) -= wq * phi * fval;
        }
      }
    }
  }
  return res;
}

// -------------------------------------------------------------- stabilization

/// T_c(phi) = h^(1-eps) sum_{interior faces} |sigma| [rho] [phi]
/// (jumps with respect to the same normal; the product is orientation-free).
inline double stabilization_Tc(const ScalarCellField& rho,
                               const ScalarCellField& phi, const Mesh& mesh,
                               double epsilon) {
  const double hfac = std::pow(mesh.h(), 1.0 - epsilon);
  double s = 0.0;
  for (int f : mesh.interior_faces()) {
    const FaceRecord& fr = mesh.face(f);
    s += fr.area * (rho[fr.owner] - rho[fr.neighbor]) *
         (phi[fr.owner] - phi[fr.neighbor]);
  }
  return hfac * s;
}

/// T_m(v) = sum_{interior faces} |sigma| [rho] {u_hat} . [v_hat], with cell
/// means of u and v and the arithmetic face average for {.}.
inline double stabilization_Tm(const ScalarCellField& rho, const CRVectorField& u,
                               const CRVectorField& v, const Mesh& mesh) {
  const CellVectorField uhat = cell_means(u);
  const CellVectorField vhat = cell_means(v);
  double s = 0.0;
  for (int f : mesh.interior_faces()) {
    const FaceRecord& fr = mesh.face(f);
    const Vec3 avg = 0.5 * (uhat[fr.owner] + uhat[fr.neighbor]);
    const Vec3 jmp = vhat[fr.owner] - vhat[fr.neighbor];
    s += fr.area * (rho[fr.owner] - rho[fr.neighbor]) * avg.dot(jmp);
  }
  return s;
}

// ------------------------------------------------------------ residual scales

/// Row scalings that make the nonlinear tolerance mesh- and unit-insensitive:
/// mass rows by dt/|K|, momentum rows by dt/(omega_sigma rho_ref u_ref) with
/// omega_sigma half the volume of the incident cells.
struct ResidualScales {
  double rho_ref = 1.0;
  double u_ref = 1.0;

  static ResidualScales from_state(const StepState& s) {
    ResidualScales sc;
    sc.rho_ref = s.rho.values.maxCoeff();
    double umax = 0.0;
    for (const Vec3& d : s.u.dofs) umax = std::max(umax, d.lpNorm<Eigen::Infinity>());
    sc.u_ref = std::max(1.0, umax);
    return sc;
  }
};

/// Scaled infinity norm of the coupled residual.
inline double scaled_residual_norm(const Eigen::VectorXd& mass_res,
                                   const Eigen::VectorXd& mom_res,
                                   const Mesh& mesh, const SchemeConfig& cfg,
                                   const ResidualScales& sc) {
  double r = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    r = std::max(r, std::abs(mass_res[c]) * cfg.dt / mesh.cell(c).volume);
  for (int k = 0; k < mesh.n_interior_faces(); ++k) {
    const int f = mesh.interior_faces()[k];
    const FaceRecord& fr = mesh.face(f);
    const double omega =
        0.5 * (mesh.cell(fr.owner).volume + mesh.cell(fr.neighbor).volume);
    const double s = cfg.dt / (omega * sc.rho_ref * sc.u_ref);
    r = std::max(r, mom_res.segment<3>(3 * k).lpNorm<Eigen::Infinity>() * s);
  }
  return r;
}

}  // namespace fvcr

#endif

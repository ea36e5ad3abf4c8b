#ifndef FVCR_SOLVER_HPP
#define FVCR_SOLVER_HPP

#include <memory>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>

#include "fvcr/scheme.hpp"

namespace fvcr {

enum class JacobianMode { FiniteDifference, AnalyticFrozenUpwind };

/// Auto picks a direct factorization at desk scale and Krylov/ILUT above
/// direct_size_limit; the choice only affects converged answers below the
/// nonlinear tolerance.
enum class LinearMethod { Auto, Direct, BiCGStab };

struct SolverConfig {
  double nonlinear_tol = 1e-10;  ///< target for the scaled residual inf-norm
  int max_picard = 60;
  int max_newton = 0;  ///< damped-Newton refinement budget after Picard
  double linear_tol = 1e-12;
  int linear_max_iter = 4000;
  JacobianMode jacobian_mode = JacobianMode::AnalyticFrozenUpwind;
  double damping = 1.0;  ///< initial Newton step length, in (0,1]
  LinearMethod linear_method = LinearMethod::Auto;
  int direct_size_limit = 4000;
  double ilut_drop_tol = 1e-4;
  int ilut_fill_factor = 4;

  void validate() const {
    if (!(nonlinear_tol > 0.0) || !(linear_tol > 0.0))
      throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (max_picard < 1 || linear_max_iter < 1)
      throw std::invalid_argument("SolverConfig: iteration budgets must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0))
      throw std::invalid_argument("SolverConfig: damping must lie in (0,1]");
  }

  bool use_direct(int n) const {
    return linear_method == LinearMethod::Direct ||
           (linear_method == LinearMethod::Auto && n <= direct_size_limit);
  }
};

/// Solver failure kinds surfaced to the harness.
enum class SolverFailure { Nonconvergence, LinearSolveFailure, SingularMatrix,
                           PositivityLost };

class SolverError : public std::runtime_error {
public:
  SolverError(SolverFailure kind, const std::string& what,
              std::vector<double> history = {})
      : std::runtime_error(what), kind(kind), residual_history(std::move(history)) {}
  SolverFailure kind;
  std::vector<double> residual_history;
};

/// Sparse linear system over the coupled unknown vector. Ordering: the
/// density unknowns (one per cell) come first, then for each interior face in
/// the mesh's compact interior ordering the three velocity components.
struct SparseSystem {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
};

/// Direct sparse factorization (desk scale) or BiCGSTAB/ILUT above it. The
/// relative linear residual of the returned solution is checked against
/// cfg.linear_tol.
inline Eigen::VectorXd linear_solve(const SparseSystem& sys,
                                    const SolverConfig& cfg = SolverConfig{},
                                    const Eigen::VectorXd* guess = nullptr) {
  const auto& A = sys.matrix;
  if (A.rows() != A.cols() || A.rows() != sys.rhs.size())
    throw std::invalid_argument("linear_solve: inconsistent dimensions");

  // structurally empty rows give the precise singularity location
  {
    std::vector<char> has(A.rows(), 0);
    for (int k = 0; k < A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
        if (it.value() != 0.0) has[it.row()] = 1;
    for (int r = 0; r < A.rows(); ++r)
      if (!has[r])
        throw SolverError(SolverFailure::SingularMatrix,
                          "singular matrix: row " + std::to_string(r) +
                              " is identically zero");
  }

  Eigen::VectorXd x;
  if (cfg.use_direct(static_cast<int>(A.rows()))) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
      throw SolverError(SolverFailure::SingularMatrix,
                        "sparse LU factorization failed: " + lu.lastErrorMessage());
    x = lu.solve(sys.rhs);
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
    it.preconditioner().setDroptol(cfg.ilut_drop_tol);
    it.preconditioner().setFillfactor(cfg.ilut_fill_factor);
    it.setTolerance(cfg.linear_tol);
    it.setMaxIterations(cfg.linear_max_iter);
    it.compute(A);
    if (guess)
      x = it.solveWithGuess(sys.rhs, *guess);
    else
      x = it.solve(sys.rhs);
    if (it.info() != Eigen::Success && it.error() > 1e-9)
      throw SolverError(SolverFailure::LinearSolveFailure,
                        "BiCGSTAB did not converge: residual " +
                            std::to_string(it.error()));
  }

  const double rel = (A * x - sys.rhs).norm() / std::max(sys.rhs.norm(), 1e-300);
  if (rel > std::max(1e3 * cfg.linear_tol, 1e-9))
    throw SolverError(SolverFailure::LinearSolveFailure,
                      "linear residual " + std::to_string(rel) + " above tolerance");
  return x;
}

// ----------------------------------------------------------------- solve_step

struct IterationReport {
  bool converged = false;
  int picard_iterations = 0;
  int newton_iterations = 0;
  std::vector<double> residual_history;
  double final_residual = 0.0;
};

/// One implicit step as a nonlinear root problem. Implementations provide the
/// residual, its scaling, one Picard update (frozen-coefficient linear solve),
/// and optionally the frozen-upwind analytic Jacobian.
class ImplicitStepSystem {
public:
  virtual ~ImplicitStepSystem() = default;
  virtual int size() const = 0;
  virtual Eigen::VectorXd residual(const Eigen::VectorXd& x) const = 0;
  virtual double scaled_norm(const Eigen::VectorXd& res) const = 0;
  virtual Eigen::VectorXd picard_iterate(const Eigen::VectorXd& x,
                                         const SolverConfig& cfg) const = 0;
  virtual Eigen::SparseMatrix<double> analytic_jacobian(
      const Eigen::VectorXd& x) const {
    throw SolverError(SolverFailure::Nonconvergence,
                      "analytic Jacobian not provided by this system");
  }
  virtual bool admissible(const Eigen::VectorXd& x) const { return true; }
};

/// Finite-difference Jacobian of system.residual; test/desk-scale only.
inline Eigen::SparseMatrix<double> fd_jacobian(const ImplicitStepSystem& system,
                                               const Eigen::VectorXd& x) {
  const int n = system.size();
  if (n > 5000)
    throw SolverError(SolverFailure::Nonconvergence,
                      "finite-difference Jacobian limited to 5000 unknowns");
  const Eigen::VectorXd r0 = system.residual(x);
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd xp = x;
  for (int j = 0; j < n; ++j) {
    const double step = 1e-7 * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + step;
    const Eigen::VectorXd rp = system.residual(xp);
    xp[j] = x[j];
    for (int i = 0; i < n; ++i) {
      const double v = (rp[i] - r0[i]) / step;
      if (v != 0.0) trips.emplace_back(i, j, v);
    }
  }
  Eigen::SparseMatrix<double> J(n, n);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

/// Picard outer loop with optional damped-Newton refinement. Converges the
/// scaled residual below cfg.nonlinear_tol or throws Nonconvergence with the
/// residual history.
inline IterationReport solve_step(const ImplicitStepSystem& system,
                                  Eigen::VectorXd& x, const SolverConfig& cfg) {
  cfg.validate();
  IterationReport rep;
  double rn = system.scaled_norm(system.residual(x));
  rep.residual_history.push_back(rn);
  if (rn <= cfg.nonlinear_tol) {
    rep.converged = true;
    rep.final_residual = rn;
    return rep;
  }

  for (int it = 0; it < cfg.max_picard; ++it) {
    x = system.picard_iterate(x, cfg);
    ++rep.picard_iterations;
    rn = system.scaled_norm(system.residual(x));
    rep.residual_history.push_back(rn);
    if (rn <= cfg.nonlinear_tol) {
      rep.converged = true;
      rep.final_residual = rn;
      return rep;
    }
  }

  for (int it = 0; it < cfg.max_newton; ++it) {
    Eigen::SparseMatrix<double> J =
        (cfg.jacobian_mode == JacobianMode::FiniteDifference)
            ? fd_jacobian(system, x)
            : system.analytic_jacobian(x);
    SparseSystem sys{std::move(J), -system.residual(x)};
    const Eigen::VectorXd dir = linear_solve(sys, cfg);

    double alpha = cfg.damping;
    Eigen::VectorXd cand;
    double cand_rn = rn;
    bool accepted = false;
    for (int half = 0; half < 8; ++half) {
      cand = x + alpha * dir;
      if (system.admissible(cand)) {
        cand_rn = system.scaled_norm(system.residual(cand));
        if (cand_rn < rn) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw SolverError(SolverFailure::Nonconvergence,
                        "Newton line search stalled at residual " +
                            std::to_string(rn),
                        rep.residual_history);
    x = cand;
    rn = cand_rn;
    ++rep.newton_iterations;
    rep.residual_history.push_back(rn);
    if (rn <= cfg.nonlinear_tol) {
      rep.converged = true;
      rep.final_residual = rn;
      return rep;
    }
  }

  throw SolverError(SolverFailure::Nonconvergence,
                    "iteration budget exhausted, residual " + std::to_string(rn),
                    rep.residual_history);
}

// ----------------------------------------------------- the coupled step system

/// The coupled algebraic system of one implicit time step of the scheme.
/// Unknown vector: [rho per cell; u per interior face x 3].
class CoupledStepSystem : public ImplicitStepSystem {
public:
  CoupledStepSystem(const StepState& prev, const Mesh& mesh,
                    const PressureLaw& law, const SchemeConfig& cfg,
                    const ResidualScales& scales)
      : prev_(prev),
        mesh_(mesh),
        law_(law),
        cfg_(cfg),
        scales_(scales),
        t_new_(prev.time + cfg.dt),
        n_cells_(mesh.n_cells()),
        n_if_(mesh.n_interior_faces()) {}

  int size() const override { return n_cells_ + 3 * n_if_; }

  Eigen::VectorXd pack(const StepState& s) const {
    Eigen::VectorXd x(size());
    x.head(n_cells_) = s.rho.values;
    for (int k = 0; k < n_if_; ++k)
      x.segment<3>(n_cells_ + 3 * k) = s.u.dofs[mesh_.interior_faces()[k]];
    return x;
  }

  StepState unpack(const Eigen::VectorXd& x) const {
    StepState s;
    s.rho = ScalarCellField(mesh_);
    s.rho.values = x.head(n_cells_);
    s.u = CRVectorField(mesh_, true);
    for (int k = 0; k < n_if_; ++k)
      s.u.dofs[mesh_.interior_faces()[k]] = x.segment<3>(n_cells_ + 3 * k);
    s.n = prev_.n + 1;
    s.time = t_new_;
    return s;
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const override {
    const StepState s = unpack(x);
    Eigen::VectorXd r(size());
    r.head(n_cells_) = mass_residual(prev_.rho, s.rho, s.u, mesh_, cfg_, t_new_);
    r.tail(3 * n_if_) = momentum_residual(prev_.rho, prev_.u, s.rho, s.u, mesh_,
                                          cfg_, law_, t_new_);
    return r;
  }

  double scaled_norm(const Eigen::VectorXd& res) const override {
    return scaled_residual_norm(res.head(n_cells_), res.tail(3 * n_if_), mesh_,
                                cfg_, scales_);
  }

  bool admissible(const Eigen::VectorXd& x) const override {
    return (x.head(n_cells_).array() > 0.0).all();
  }

  /// One Picard sweep: a momentum solve with frozen density/upwind data,
  /// followed by a mass solve with the new advecting velocity. The mass system
  /// is an M-matrix, so the density iterate stays positive.
  Eigen::VectorXd picard_iterate(const Eigen::VectorXd& x,
                                 const SolverConfig& scfg) const override {
    StepState cur = unpack(x);
    const Eigen::VectorXd u_new = solve_momentum(cur.rho, cur.u, scfg);
    for (int k = 0; k < n_if_; ++k)
      cur.u.dofs[mesh_.interior_faces()[k]] = u_new.segment<3>(3 * k);
    cur.rho.values = solve_mass(cur.u, scfg);
    return pack(cur);
  }

  Eigen::SparseMatrix<double> analytic_jacobian(
      const Eigen::VectorXd& x) const override {
    const StepState s = unpack(x);
    const CellVectorField uhat = cell_means(s.u);
    const double delta = cfg_.delta(mesh_.h());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(80) * size());

    auto uidx = [&](int face, int comp) {
      return n_cells_ + 3 * mesh_.interior_index(face) + comp;
    };

    // ---- mass rows
    if (cfg_.terms.time)
      for (int c = 0; c < n_cells_; ++c)
        t.emplace_back(c, c, mesh_.cell(c).volume / cfg_.dt);
    if (cfg_.terms.convection) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double un = s.u.dofs[f].dot(fr.normal);
        const UpwindCoeffs c = upwind_coeffs(un, cfg_.variant, delta);
        const int O = fr.owner, N = fr.neighbor;
        t.emplace_back(O, O, fr.area * c.cK);
        t.emplace_back(O, N, fr.area * c.cL);
        t.emplace_back(N, O, -fr.area * c.cK);
        t.emplace_back(N, N, -fr.area * c.cL);
        const double dflux = fr.area * (s.rho[O] * c.dK + s.rho[N] * c.dL);
        for (int j = 0; j < 3; ++j) {
          t.emplace_back(O, uidx(f, j), dflux * fr.normal[j]);
          t.emplace_back(N, uidx(f, j), -dflux * fr.normal[j]);
        }
      }
    }
    if (cfg_.terms.stabilization && cfg_.variant == SchemeVariant::Stabilized) {
      const double hf = cfg_.delta(mesh_.h());
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double w = hf * fr.area;
        t.emplace_back(fr.owner, fr.owner, w);
        t.emplace_back(fr.owner, fr.neighbor, -w);
        t.emplace_back(fr.neighbor, fr.owner, -w);
        t.emplace_back(fr.neighbor, fr.neighbor, w);
      }
    }

    // ---- momentum rows
    // scatter helpers over the interior test faces of a cell
    auto for_tests = [&](int c, auto&& body) {
      const CellRecord& cr = mesh_.cell(c);
      for (int k = 0; k < 4; ++k) {
        const int fi = cr.faces[k];
        if (mesh_.interior_index(fi) >= 0) body(fi);
      }
    };

    if (cfg_.terms.time) {
      for (int c = 0; c < n_cells_; ++c) {
        const CellRecord& cr = mesh_.cell(c);
        const double tc = cr.volume / cfg_.dt;
        for_tests(c, [&](int ft) {
          for (int i = 0; i < 3; ++i) {
            t.emplace_back(uidx(ft, i), c, 0.25 * tc * uhat[c][i]);
            for (int k2 = 0; k2 < 4; ++k2) {
              const int fu = cr.faces[k2];
              if (mesh_.interior_index(fu) < 0) continue;
              t.emplace_back(uidx(ft, i), uidx(fu, i), tc * s.rho[c] / 16.0);
            }
          }
        });
      }
    }

    if (cfg_.terms.convection) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double un = s.u.dofs[f].dot(fr.normal);
        const UpwindCoeffs c = upwind_coeffs(un, cfg_.variant, delta);
        const int O = fr.owner, N = fr.neighbor;
        const Vec3 dflux_dun =
            fr.area * (c.dK * s.rho[O] * uhat[O] + c.dL * s.rho[N] * uhat[N]);
        for (int side = 0; side < 2; ++side) {
          const int K = (side == 0) ? O : N;
          const double sgn = (side == 0) ? 1.0 : -1.0;
          for_tests(K, [&](int ft) {
            const double q = 0.25 * sgn * fr.area;
            for (int i = 0; i < 3; ++i) {
              const int row = uidx(ft, i);
              // d/d rho
              t.emplace_back(row, O, q * c.cK * uhat[O][i]);
              t.emplace_back(row, N, q * c.cL * uhat[N][i]);
              // d/d u through the advected cell means
              const CellRecord& co = mesh_.cell(O);
              for (int k2 = 0; k2 < 4; ++k2)
                if (mesh_.interior_index(co.faces[k2]) >= 0)
                  t.emplace_back(row, uidx(co.faces[k2], i),
                                 q * c.cK * s.rho[O] * 0.25);
              const CellRecord& cn = mesh_.cell(N);
              for (int k2 = 0; k2 < 4; ++k2)
                if (mesh_.interior_index(cn.faces[k2]) >= 0)
                  t.emplace_back(row, uidx(cn.faces[k2], i),
                                 q * c.cL * s.rho[N] * 0.25);
              // d/d u through the normal velocity
              for (int j = 0; j < 3; ++j)
                t.emplace_back(row, uidx(f, j),
                               0.25 * sgn * dflux_dun[i] * fr.normal[j]);
            }
          });
        }
      }
    }

    if (cfg_.terms.pressure) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        for (int i = 0; i < 3; ++i) {
          const int row = uidx(f, i);
          t.emplace_back(row, fr.owner, -fr.area * law_.dp(s.rho[fr.owner]) * fr.normal[i]);
          t.emplace_back(row, fr.neighbor,
                         fr.area * law_.dp(s.rho[fr.neighbor]) * fr.normal[i]);
        }
      }
    }

    if (cfg_.terms.viscous) append_viscous_triplets(t, [&](int face, int comp) {
      return uidx(face, comp);
    });

    if (cfg_.terms.stabilization && cfg_.variant == SchemeVariant::Stabilized) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const int O = fr.owner, N = fr.neighbor;
        const Vec3 m = 0.5 * (uhat[O] + uhat[N]);
        const double w = fr.area * (s.rho[O] - s.rho[N]);
        for (int side = 0; side < 2; ++side) {
          const int K = (side == 0) ? O : N;
          const double sgn = (side == 0) ? 1.0 : -1.0;
          for_tests(K, [&](int ft) {
            for (int i = 0; i < 3; ++i) {
              const int row = uidx(ft, i);
              t.emplace_back(row, O, 0.25 * sgn * fr.area * m[i]);
              t.emplace_back(row, N, -0.25 * sgn * fr.area * m[i]);
              for (int side2 = 0; side2 < 2; ++side2) {
                const CellRecord& c2 = mesh_.cell(side2 == 0 ? O : N);
                for (int k2 = 0; k2 < 4; ++k2)
                  if (mesh_.interior_index(c2.faces[k2]) >= 0)
                    t.emplace_back(row, uidx(c2.faces[k2], i),
                                   0.25 * sgn * w * 0.5 * 0.25);
              }
            }
          });
        }
      }
    }

    Eigen::SparseMatrix<double> J(size(), size());
    J.setFromTriplets(t.begin(), t.end());
    return J;
  }

private:
  template <class Index>
  void append_viscous_triplets(std::vector<Eigen::Triplet<double>>& t,
                               Index&& index, int row_offset = 0) const {
    for (int c = 0; c < n_cells_; ++c) {
      const CellRecord& cr = mesh_.cell(c);
      Vec3 gphi[4];
      for (int k = 0; k < 4; ++k) {
        const FaceRecord& fk = mesh_.face(cr.faces[k]);
        gphi[k] = (fk.area / cr.volume) * cr.face_sign[k] * fk.normal;
      }
      for (int kt = 0; kt < 4; ++kt) {
        if (mesh_.interior_index(cr.faces[kt]) < 0) continue;
        for (int ku = 0; ku < 4; ++ku) {
          if (mesh_.interior_index(cr.faces[ku]) < 0) continue;
          const double lap = cfg_.mu * cr.volume * gphi[ku].dot(gphi[kt]);
          for (int i = 0; i < 3; ++i) {
            t.emplace_back(row_offset + index(cr.faces[kt], i),
                           row_offset + index(cr.faces[ku], i), lap);
            for (int j = 0; j < 3; ++j)
              t.emplace_back(row_offset + index(cr.faces[kt], i),
                             row_offset + index(cr.faces[ku], j),
                             (cfg_.mu / 3.0) * cr.volume * gphi[ku][j] * gphi[kt][i]);
          }
        }
      }
    }
  }

  /// Momentum linear system with frozen density, upwind directions and
  /// advecting mass fluxes from the current iterate.
  Eigen::VectorXd solve_momentum(const ScalarCellField& rho_frozen,
                                 const CRVectorField& u_frozen,
                                 const SolverConfig& scfg) const {
    const int n = 3 * n_if_;
    const double delta = cfg_.delta(mesh_.h());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(60) * n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    const CellVectorField uhat_prev = cell_means(prev_.u);

    auto uidx = [&](int face, int comp) {
      return 3 * mesh_.interior_index(face) + comp;
    };
    auto for_tests = [&](int c, auto&& body) {
      const CellRecord& cr = mesh_.cell(c);
      for (int k = 0; k < 4; ++k)
        if (mesh_.interior_index(cr.faces[k]) >= 0) body(cr.faces[k]);
    };

    if (cfg_.terms.time) {
      for (int c = 0; c < n_cells_; ++c) {
        const CellRecord& cr = mesh_.cell(c);
        const double tc = cr.volume / cfg_.dt;
        const Vec3 rhs_c = tc * prev_.rho[c] * uhat_prev[c];
        for_tests(c, [&](int ft) {
          for (int i = 0; i < 3; ++i) {
            rhs[uidx(ft, i)] += 0.25 * rhs_c[i];
            for (int k2 = 0; k2 < 4; ++k2)
              if (mesh_.interior_index(cr.faces[k2]) >= 0)
                t.emplace_back(uidx(ft, i), uidx(cr.faces[k2], i),
                               tc * rho_frozen[c] / 16.0);
          }
        });
      }
    }

    if (cfg_.terms.convection) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double un = u_frozen.dofs[f].dot(fr.normal);
        const UpwindCoeffs c = upwind_coeffs(un, cfg_.variant, delta);
        const int O = fr.owner, N = fr.neighbor;
        const double fK = fr.area * c.cK * rho_frozen[O];   // advects uhat_O
        const double fL = fr.area * c.cL * rho_frozen[N];   // advects uhat_N
        for (int side = 0; side < 2; ++side) {
          const int K = (side == 0) ? O : N;
          const double sgn = (side == 0) ? 1.0 : -1.0;
          for_tests(K, [&](int ft) {
            for (int i = 0; i < 3; ++i) {
              const int row = uidx(ft, i);
              const CellRecord& co = mesh_.cell(O);
              for (int k2 = 0; k2 < 4; ++k2)
                if (mesh_.interior_index(co.faces[k2]) >= 0)
                  t.emplace_back(row, uidx(co.faces[k2], i), sgn * fK / 16.0);
              const CellRecord& cn = mesh_.cell(N);
              for (int k2 = 0; k2 < 4; ++k2)
                if (mesh_.interior_index(cn.faces[k2]) >= 0)
                  t.emplace_back(row, uidx(cn.faces[k2], i), sgn * fL / 16.0);
            }
          });
        }
      }
    }

    if (cfg_.terms.pressure) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double dp =
            fr.area * (law_.p(rho_frozen[fr.owner]) - law_.p(rho_frozen[fr.neighbor]));
        for (int i = 0; i < 3; ++i) rhs[uidx(f, i)] += dp * fr.normal[i];
      }
    }

    if (cfg_.terms.viscous)
      append_viscous_triplets(t, [&](int face, int comp) {
        return 3 * mesh_.interior_index(face) + comp;
      });

    if (cfg_.terms.stabilization && cfg_.variant == SchemeVariant::Stabilized) {
      // frozen density jumps, unknown advected means
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const int O = fr.owner, N = fr.neighbor;
        const double w = fr.area * (rho_frozen[O] - rho_frozen[N]);
        for (int side = 0; side < 2; ++side) {
          const int K = (side == 0) ? O : N;
          const double sgn = (side == 0) ? 1.0 : -1.0;
          for_tests(K, [&](int ft) {
            for (int i = 0; i < 3; ++i) {
              const int row = uidx(ft, i);
              for (int side2 = 0; side2 < 2; ++side2) {
                const CellRecord& c2 = mesh_.cell(side2 == 0 ? O : N);
                for (int k2 = 0; k2 < 4; ++k2)
                  if (mesh_.interior_index(c2.faces[k2]) >= 0)
                    t.emplace_back(row, uidx(c2.faces[k2], i),
                                   0.25 * sgn * w * 0.5 * 0.25);
              }
            }
          });
        }
      }
    }

    if (cfg_.terms.forcing && cfg_.forcing.momentum_source) {
      const CellRule& rule = CellRule::degree3();
      for (int c = 0; c < n_cells_; ++c) {
        const CellRecord& cr = mesh_.cell(c);
        const auto verts = mesh_.cell_vertices(c);
        for (size_t q = 0; q < rule.points.size(); ++q) {
          const auto& lam = rule.points[q];
          const Vec3 x = lam[0] * verts[0] + lam[1] * verts[1] +
                         lam[2] * verts[2] + lam[3] * verts[3];
          const Vec3 fval = cfg_.forcing.momentum_source(t_new_, x);
          const double wq = rule.weights[q] * cr.volume;
          for (int k = 0; k < 4; ++k) {
            if (mesh_.interior_index(cr.faces[k]) < 0) continue;
            const double phi = 1.0 - 3.0 * lam[k];
            for (int i = 0; i < 3; ++i)
              rhs[uidx(cr.faces[k], i)] += wq * phi * fval[i];
          }
        }
      }
    }

    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd guess(n);
    for (int k = 0; k < n_if_; ++k)
      guess.segment<3>(3 * k) = u_frozen.dofs[mesh_.interior_faces()[k]];
    return linear_solve(SparseSystem{std::move(A), std::move(rhs)}, scfg, &guess);
  }

  /// Mass linear system with the given advecting velocity; unknown density.
  /// The matrix is an M-matrix, with positive right-hand side (positive
  /// previous density plus dt-weighted source), so the solution is positive.
  Eigen::VectorXd solve_mass(const CRVectorField& u_adv,
                             const SolverConfig& scfg) const {
    const double delta = cfg_.delta(mesh_.h());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(8) * n_cells_);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_cells_);

    for (int c = 0; c < n_cells_; ++c) {
      const double tc = mesh_.cell(c).volume / cfg_.dt;
      t.emplace_back(c, c, cfg_.terms.time ? tc : 1.0);
      rhs[c] += cfg_.terms.time ? tc * prev_.rho[c] : prev_.rho[c];
    }
    if (cfg_.terms.convection) {
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double un = u_adv.dofs[f].dot(fr.normal);
        const UpwindCoeffs c = upwind_coeffs(un, cfg_.variant, delta);
        const int O = fr.owner, N = fr.neighbor;
        t.emplace_back(O, O, fr.area * c.cK);
        t.emplace_back(O, N, fr.area * c.cL);
        t.emplace_back(N, O, -fr.area * c.cK);
        t.emplace_back(N, N, -fr.area * c.cL);
      }
    }
    if (cfg_.terms.stabilization && cfg_.variant == SchemeVariant::Stabilized) {
      const double hf = cfg_.delta(mesh_.h());
      for (int f : mesh_.interior_faces()) {
        const FaceRecord& fr = mesh_.face(f);
        const double w = hf * fr.area;
        t.emplace_back(fr.owner, fr.owner, w);
        t.emplace_back(fr.owner, fr.neighbor, -w);
        t.emplace_back(fr.neighbor, fr.owner, -w);
        t.emplace_back(fr.neighbor, fr.neighbor, w);
      }
    }
    if (cfg_.terms.forcing && cfg_.forcing.mass_source) {
      for (int c = 0; c < n_cells_; ++c)
        rhs[c] += mesh_.cell(c).volume * cell_mean(mesh_, c, [&](const Vec3& x) {
          return cfg_.forcing.mass_source(t_new_, x);
        });
    }

    Eigen::SparseMatrix<double> A(n_cells_, n_cells_);
    A.setFromTriplets(t.begin(), t.end());
    // the closing mass solve fixes the conservation identity to the accuracy
    // of this solve; keep it a direct factorization
    SolverConfig direct = scfg;
    direct.linear_method = LinearMethod::Direct;
    return linear_solve(SparseSystem{std::move(A), std::move(rhs)}, direct);
  }

  const StepState& prev_;
  const Mesh& mesh_;
  const PressureLaw& law_;
  const SchemeConfig& cfg_;
  ResidualScales scales_;
  double t_new_;
  int n_cells_;
  int n_if_;
};

// -------------------------------------------------------------------- advance

struct AdvanceResult {
  StepState state;
  IterationReport report;
};

/// One implicit time step. The returned state satisfies the scaled residual
/// tolerance and has positive density (a converged solution with nonpositive
/// density is reported as a solver failure, not a scheme property).
inline AdvanceResult advance(const StepState& prev, const Mesh& mesh,
                             const PressureLaw& law, const SchemeConfig& cfg,
                             const SolverConfig& scfg,
                             const ResidualScales* scales = nullptr) {
  cfg.validate();
  const ResidualScales sc = scales ? *scales : ResidualScales::from_state(prev);
  CoupledStepSystem system(prev, mesh, law, cfg, sc);
  Eigen::VectorXd x = system.pack(prev);
  AdvanceResult out;
  out.report = solve_step(system, x, scfg);
  out.state = system.unpack(x);
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (!(out.state.rho[c] > 0.0))
      throw SolverError(SolverFailure::PositivityLost,
                        "converged density nonpositive on cell " + std::to_string(c),
                        out.report.residual_history);
  return out;
}

}  // namespace fvcr

#endif

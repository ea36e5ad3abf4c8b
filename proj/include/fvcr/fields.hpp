#ifndef FVCR_FIELDS_HPP
#define FVCR_FIELDS_HPP

#include <functional>

#include <Eigen/Dense>

#include "fvcr/mesh.hpp"
#include "fvcr/quadrature.hpp"

namespace fvcr {

/// Piecewise-constant scalar field: one value per cell.
struct ScalarCellField {
  const Mesh* mesh = nullptr;
  Eigen::VectorXd values;

  ScalarCellField() = default;
  explicit ScalarCellField(const Mesh& m, double init = 0.0)
      : mesh(&m), values(Eigen::VectorXd::Constant(m.n_cells(), init)) {}

  double operator[](int c) const { return values[c]; }
  double& operator[](int c) { return values[c]; }
  int size() const { return static_cast<int>(values.size()); }
};

/// Piecewise-constant vector field (cell means).
struct CellVectorField {
  const Mesh* mesh = nullptr;
  std::vector<Vec3> values;

  CellVectorField() = default;
  explicit CellVectorField(const Mesh& m)
      : mesh(&m), values(m.n_cells(), Vec3::Zero()) {}

  const Vec3& operator[](int c) const { return values[c]; }
  Vec3& operator[](int c) { return values[c]; }
};

/// Crouzeix-Raviart vector field: one vector DOF per face (the face mean).
/// Per cell the field is the P1 interpolant of its four face means, with the
/// shape function of face k (opposite local vertex k) equal to 1 - 3 lambda_k.
struct CRVectorField {
  const Mesh* mesh = nullptr;
  std::vector<Vec3> dofs;
  bool zero_trace = false;

  CRVectorField() = default;
  explicit CRVectorField(const Mesh& m, bool zero_trace_ = false)
      : mesh(&m), dofs(m.n_faces(), Vec3::Zero()), zero_trace(zero_trace_) {}

  const Vec3& operator[](int f) const { return dofs[f]; }
  Vec3& operator[](int f) { return dofs[f]; }

  /// Zeroes boundary DOFs; call after bulk edits of a zero-trace field.
  void enforce_zero_trace() {
    for (int f = 0; f < mesh->n_faces(); ++f)
      if (!mesh->face(f).interior()) dofs[f].setZero();
  }

  bool trace_is_zero(double tol = 0.0) const {
    for (int f = 0; f < mesh->n_faces(); ++f)
      if (!mesh->face(f).interior() && dofs[f].lpNorm<Eigen::Infinity>() > tol)
        return false;
    return true;
  }

  /// Value of the cell-K branch at point x (P1 evaluation).
  Vec3 eval(int c, const Vec3& x) const {
    const CellRecord& cr = mesh->cell(c);
    const auto lam = mesh->barycentric(c, x);
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < 4; ++k) v += (1.0 - 3.0 * lam[k]) * dofs[cr.faces[k]];
    return v;
  }

  /// Cellwise-constant gradient of the P1 representation on cell c,
  /// (grad v)_{ij} = d v_i / d x_j.
  Mat3 cell_gradient(int c) const {
    const CellRecord& cr = mesh->cell(c);
    Mat3 g = Mat3::Zero();
    for (int k = 0; k < 4; ++k) {
      const FaceRecord& fr = mesh->face(cr.faces[k]);
      const Vec3 n = cr.face_sign[k] * fr.normal;
      g += (fr.area / cr.volume) * dofs[cr.faces[k]] * n.transpose();
    }
    return g;
  }

  /// Cell mean: (1/4) sum of the four face DOFs.
  Vec3 cell_mean(int c) const {
    const CellRecord& cr = mesh->cell(c);
    return 0.25 * (dofs[cr.faces[0]] + dofs[cr.faces[1]] + dofs[cr.faces[2]] +
                   dofs[cr.faces[3]]);
  }
};

// ---------------------------------------------------------------- projections

/// Cell-mean projection of a scalar function (quadrature means).
template <class F>
ScalarCellField project_Q(const Mesh& mesh, F&& f) {
  ScalarCellField q(mesh);
  for (int c = 0; c < mesh.n_cells(); ++c) q[c] = cell_mean(mesh, c, f);
  return q;
}

/// Componentwise cell-mean projection of a vector function.
template <class F>
CellVectorField project_Q_vector(const Mesh& mesh, F&& f) {
  CellVectorField q(mesh);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    Vec3 s = Vec3::Zero();
    const auto v = mesh.cell_vertices(c);
    const CellRule& rule = CellRule::degree3();
    for (size_t k = 0; k < rule.points.size(); ++k) {
      const auto& lam = rule.points[k];
      s += rule.weights[k] *
           f(lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2] + lam[3] * v[3]);
    }
    q[c] = s;
  }
  return q;
}

/// Cell means of a CR field (the hat operator).
inline CellVectorField cell_means(const CRVectorField& u) {
  CellVectorField m(*u.mesh);
  for (int c = 0; c < u.mesh->n_cells(); ++c) m[c] = u.cell_mean(c);
  return m;
}

/// Crouzeix-Raviart projection: face DOF = face mean of f; with zero_trace the
/// boundary DOFs are set to zero instead.
template <class F>
CRVectorField project_CR(const Mesh& mesh, F&& f, bool zero_trace) {
  CRVectorField u(mesh, zero_trace);
  for (int fi = 0; fi < mesh.n_faces(); ++fi) {
    if (zero_trace && !mesh.face(fi).interior()) continue;
    u[fi] = face_mean(mesh, fi, f);
  }
  return u;
}

// ---------------------------------------------------------------------- jumps

/// Which of the two face normals the jump is taken with respect to.
enum class NormalChoice { Owner, Neighbor };

/// Jump of a piecewise-constant field across face f: q_K - q_L with respect to
/// the owner normal (negated for NormalChoice::Neighbor). On exterior faces the
/// jump is the interior value itself.
inline double jump(const ScalarCellField& q, int f,
                   NormalChoice nc = NormalChoice::Owner) {
  const FaceRecord& fr = q.mesh->face(f);
  if (!fr.interior()) return q[fr.owner];
  const double j = q[fr.owner] - q[fr.neighbor];
  return nc == NormalChoice::Owner ? j : -j;
}

/// Jump of a CR field across face f evaluated at point x on the face.
inline Vec3 jump(const CRVectorField& v, int f, const Vec3& x,
                 NormalChoice nc = NormalChoice::Owner) {
  const FaceRecord& fr = v.mesh->face(f);
  if (!fr.interior()) return v.eval(fr.owner, x);
  const Vec3 j = v.eval(fr.owner, x) - v.eval(fr.neighbor, x);
  return nc == NormalChoice::Owner ? j : Vec3(-j);
}

/// Integral of the CR jump over the face (face quadrature).
inline Vec3 jump_integral(const CRVectorField& v, int f,
                          NormalChoice nc = NormalChoice::Owner) {
  return integrate_face(*v.mesh, f,
                        [&](const Vec3& x) { return jump(v, f, x, nc); });
}

// ----------------------------------------------------------- broken operators

/// Cellwise gradients of the P1 representation.
inline std::vector<Mat3> broken_grad(const CRVectorField& v) {
  std::vector<Mat3> g(v.mesh->n_cells());
  for (int c = 0; c < v.mesh->n_cells(); ++c) g[c] = v.cell_gradient(c);
  return g;
}

/// Cellwise divergences; identically trace(broken_grad).
inline ScalarCellField broken_div(const CRVectorField& v) {
  ScalarCellField d(*v.mesh);
  for (int c = 0; c < v.mesh->n_cells(); ++c) d[c] = v.cell_gradient(c).trace();
  return d;
}

// ------------------------------------------------------------------ L1-1 test

/// Both sides of the divergence-projection identity
///   sum_K int_K q div Pi_CR[v] = int q div v
/// for a piecewise-constant q and a smooth vector field v.
template <class F>
std::pair<double, double> divergence_projection_check(const ScalarCellField& q,
                                                      F&& v) {
  const Mesh& mesh = *q.mesh;
  CRVectorField pv = project_CR(mesh, v, false);
  double lhs = 0.0, rhs = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    lhs += q[c] * mesh.cell(c).volume * pv.cell_gradient(c).trace();
    // int_K div v by the divergence theorem through face quadrature
    double flux = 0.0;
    const CellRecord& cr = mesh.cell(c);
    for (int k = 0; k < 4; ++k) {
      const int f = cr.faces[k];
      const Vec3 n = cr.face_sign[k] * mesh.face(f).normal;
      flux += integrate_face(mesh, f, [&](const Vec3& x) { return v(x).dot(n); });
    }
    rhs += q[c] * flux;
  }
  return {lhs, rhs};
}

// ---------------------------------------------------------------------- norms

struct BrokenNorms {
  double l2 = 0.0;          ///< ||v||_{L^2}
  double l6 = 0.0;          ///< ||v||_{L^6}
  double h1_broken = 0.0;   ///< (sum_K int_K |grad v|^2)^{1/2}
  double face_dof = 0.0;    ///< (sum_sigma |sigma| h |v_sigma|^p)^{1/p}
};

namespace detail {

// Exact integral over cell c of |v|^2 for P1 v: barycentric moments
//   int_K lam_a lam_b = |K|/10 (a==b), |K|/20 (a!=b).
inline double l2sq_cell(const Mesh& mesh, const CRVectorField& v, int c) {
  const CellRecord& cr = mesh.cell(c);
  // vertex values: c_k = S - 3 dof_{face k}
  Vec3 dof[4], vert[4];
  Vec3 S = Vec3::Zero();
  for (int k = 0; k < 4; ++k) {
    dof[k] = v.dofs[cr.faces[k]];
    S += dof[k];
  }
  for (int k = 0; k < 4; ++k) vert[k] = S - 3.0 * dof[k];
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      s += vert[a].dot(vert[b]) * (a == b ? 0.1 : 0.05);
  return s * cr.volume;
}

// Exact integral over cell c of |v|^6 = (|v|^2)^3 for P1 v, via the moment
// formula int_K prod lam^alpha = |K| 3! prod(alpha!)/(|alpha|+3)!.
inline double l6_cell(const Mesh& mesh, const CRVectorField& v, int c) {
  const CellRecord& cr = mesh.cell(c);
  Vec3 dof[4], vert[4];
  Vec3 S = Vec3::Zero();
  for (int k = 0; k < 4; ++k) {
    dof[k] = v.dofs[cr.faces[k]];
    S += dof[k];
  }
  for (int k = 0; k < 4; ++k) vert[k] = S - 3.0 * dof[k];
  double M[4][4];
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) M[a][b] = vert[a].dot(vert[b]);
  static const double fact[7] = {1, 1, 2, 6, 24, 120, 720};
  constexpr double nine_fact = 362880.0;
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c2 = 0; c2 < 4; ++c2)
        for (int d = 0; d < 4; ++d)
          for (int e = 0; e < 4; ++e)
            for (int f = 0; f < 4; ++f) {
              int alpha[4] = {0, 0, 0, 0};
              ++alpha[a]; ++alpha[b]; ++alpha[c2]; ++alpha[d]; ++alpha[e]; ++alpha[f];
              const double mom = 6.0 * fact[alpha[0]] * fact[alpha[1]] *
                                 fact[alpha[2]] * fact[alpha[3]] / nine_fact;
              s += M[a][b] * M[c2][d] * M[e][f] * mom;
            }
  return s * cr.volume;
}

}  // namespace detail

/// Exact broken norms of a CR field (closed forms on P1 / cellwise constants).
/// p is the exponent of the face-DOF norm sum |sigma| h |v_sigma|^p, p in {1,2,6}.
inline BrokenNorms broken_norms(const CRVectorField& v, int p = 2) {
  if (p != 1 && p != 2 && p != 6)
    throw std::invalid_argument("broken_norms: p must be 1, 2 or 6");
  const Mesh& mesh = *v.mesh;
  BrokenNorms out;
  double l2sq = 0.0, l6p6 = 0.0, h1sq = 0.0, fsum = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    l2sq += detail::l2sq_cell(mesh, v, c);
    l6p6 += detail::l6_cell(mesh, v, c);
    h1sq += mesh.cell(c).volume * v.cell_gradient(c).squaredNorm();
  }
  for (int f = 0; f < mesh.n_faces(); ++f)
    fsum += mesh.face(f).area * mesh.h() * std::pow(v.dofs[f].norm(), p);
  out.l2 = std::sqrt(l2sq);
  out.l6 = std::pow(l6p6, 1.0 / 6.0);
  out.h1_broken = std::sqrt(h1sq);
  out.face_dof = std::pow(fsum, 1.0 / p);
  return out;
}

}  // namespace fvcr

#endif

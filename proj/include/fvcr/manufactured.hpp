#ifndef FVCR_MANUFACTURED_HPP
#define FVCR_MANUFACTURED_HPP

#include <cmath>
#include <string>
#include <vector>

#include "fvcr/diagnostics.hpp"
#include "fvcr/scheme.hpp"

namespace fvcr {

/// Closed-form reference solution with all derivatives needed to form the
/// induced sources
///   g = dr/dt + div(r V),
///   f = r dV/dt + r (V . grad) V + grad p(r) - mu lap V - (mu/3) grad div V.
struct ManufacturedSolution {
  std::string name;
  bool zero_boundary_velocity = true;  ///< V vanishes on the domain boundary

  std::function<double(double, const Vec3&)> r;
  std::function<Vec3(double, const Vec3&)> V;
  std::function<double(double, const Vec3&)> dr_dt;
  std::function<Vec3(double, const Vec3&)> grad_r;
  std::function<Vec3(double, const Vec3&)> dV_dt;
  std::function<Mat3(double, const Vec3&)> grad_V;  ///< (grad V)_{ij} = dV_i/dx_j
  std::function<Vec3(double, const Vec3&)> lap_V;
  std::function<Vec3(double, const Vec3&)> grad_div_V;

  double mass_source(double t, const Vec3& x) const {
    return dr_dt(t, x) + grad_r(t, x).dot(V(t, x)) + r(t, x) * grad_V(t, x).trace();
  }

  Vec3 momentum_source(double t, const Vec3& x, const PressureLaw& law,
                       double mu) const {
    const double rv = r(t, x);
    return rv * dV_dt(t, x) + rv * (grad_V(t, x) * V(t, x)) +
           law.dp(rv) * grad_r(t, x) - mu * lap_V(t, x) -
           (mu / 3.0) * grad_div_V(t, x);
  }

  ForcingTerms make_forcing(const PressureLaw& law, double mu) const {
    ForcingTerms f;
    f.mass_source = [*this](double t, const Vec3& x) { return mass_source(t, x); };
    f.momentum_source = [*this, law, mu](double t, const Vec3& x) {
      return momentum_source(t, x, law, mu);
    };
    return f;
  }

  ExactSolution exact() const { return ExactSolution{r, V, grad_V}; }

  /// Max |V| over the boundary face quadrature points; the startup
  /// compatibility check requires <= 1e-12 when zero_boundary_velocity.
  double boundary_velocity_max(const Mesh& mesh, double t) const {
    double m = 0.0;
    const FaceRule& rule = FaceRule::degree3();
    for (int f = 0; f < mesh.n_faces(); ++f) {
      const FaceRecord& fr = mesh.face(f);
      if (fr.interior()) continue;
      const Vec3& a = mesh.vertex(fr.vertices[0]);
      const Vec3& b = mesh.vertex(fr.vertices[1]);
      const Vec3& c = mesh.vertex(fr.vertices[2]);
      for (const auto& lam : rule.points) {
        const Vec3 x = lam[0] * a + lam[1] * b + lam[2] * c;
        m = std::max(m, V(t, x).lpNorm<Eigen::Infinity>());
      }
    }
    return m;
  }
};

// -------------------------------------------------------------------- catalog

/// Rest state r = 1, V = 0 with zero sources; an exact fixed point of the scheme.
inline ManufacturedSolution make_rest() {
  ManufacturedSolution s;
  s.name = "rest";
  s.r = [](double, const Vec3&) { return 1.0; };
  s.V = [](double, const Vec3&) { return Vec3::Zero(); };
  s.dr_dt = [](double, const Vec3&) { return 0.0; };
  s.grad_r = [](double, const Vec3&) { return Vec3::Zero(); };
  s.dV_dt = [](double, const Vec3&) { return Vec3::Zero(); };
  s.grad_V = [](double, const Vec3&) { return Mat3::Zero(); };
  s.lap_V = [](double, const Vec3&) { return Vec3::Zero(); };
  s.grad_div_V = [](double, const Vec3&) { return Vec3::Zero(); };
  return s;
}

/// Separable bubble solution on the unit cube:
///   r = 1 + (1/4) sin(t) S,  V_i = sin(t) S,  S = sin(pi x1) sin(pi x2) sin(pi x3).
/// V vanishes on the cube boundary; at t = 0 the state is exactly (1, 0).
inline ManufacturedSolution make_mms1() {
  constexpr double pi = 3.14159265358979323846;
  auto S = [](const Vec3& x) {
    return std::sin(pi * x[0]) * std::sin(pi * x[1]) * std::sin(pi * x[2]);
  };
  auto gradS = [](const Vec3& x) {
    const double s0 = std::sin(pi * x[0]), c0 = std::cos(pi * x[0]);
    const double s1 = std::sin(pi * x[1]), c1 = std::cos(pi * x[1]);
    const double s2 = std::sin(pi * x[2]), c2 = std::cos(pi * x[2]);
    return Vec3(pi * c0 * s1 * s2, pi * s0 * c1 * s2, pi * s0 * s1 * c2);
  };
  // Hessian of S: diagonal -pi^2 S, off-diagonal pi^2 cos cos sin
  auto hessS = [](const Vec3& x) {
    const double s[3] = {std::sin(pi * x[0]), std::sin(pi * x[1]),
                         std::sin(pi * x[2])};
    const double c[3] = {std::cos(pi * x[0]), std::cos(pi * x[1]),
                         std::cos(pi * x[2])};
    Mat3 h;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) {
          h(i, j) = -pi * pi * s[0] * s[1] * s[2];
        } else {
          const int k = 3 - i - j;
          double v = pi * pi * c[i] * c[j];
          v *= s[k];
          h(i, j) = v;
        }
      }
    return h;
  };

  ManufacturedSolution m;
  m.name = "mms1";
  m.r = [S](double t, const Vec3& x) { return 1.0 + 0.25 * std::sin(t) * S(x); };
  m.dr_dt = [S](double t, const Vec3& x) { return 0.25 * std::cos(t) * S(x); };
  m.grad_r = [gradS](double t, const Vec3& x) {
    return Vec3(0.25 * std::sin(t) * gradS(x));
  };
  m.V = [S](double t, const Vec3& x) {
    return Vec3(Vec3::Ones() * (std::sin(t) * S(x)));
  };
  m.dV_dt = [S](double t, const Vec3& x) {
    return Vec3(Vec3::Ones() * (std::cos(t) * S(x)));
  };
  m.grad_V = [gradS](double t, const Vec3& x) {
    return Mat3(std::sin(t) * Vec3::Ones() * gradS(x).transpose());
  };
  m.lap_V = [S](double t, const Vec3& x) {
    return Vec3(Vec3::Ones() * (-3.0 * pi * pi * std::sin(t) * S(x)));
  };
  m.grad_div_V = [hessS](double t, const Vec3& x) {
    const Mat3 h = hessS(x);
    return Vec3(std::sin(t) * (h * Vec3::Ones()));
  };
  return m;
}

/// Globally affine velocity V = A x + v0 with constant density; reproduced
/// exactly by the spaces, but V does not vanish on the boundary, so the
/// zero-trace discrete velocity cannot follow it near the walls. Used to
/// exercise the error-floor flagging of the convergence study.
inline ManufacturedSolution make_affine() {
  Mat3 A;
  A << 0.08, 0.03, 0.0,
       0.0, -0.05, 0.02,
       0.01, 0.0, 0.04;
  const Vec3 v0(0.02, -0.01, 0.015);
  const double r0 = 1.0;

  ManufacturedSolution m;
  m.name = "affine";
  m.zero_boundary_velocity = false;
  m.r = [r0](double, const Vec3&) { return r0; };
  m.dr_dt = [](double, const Vec3&) { return 0.0; };
  m.grad_r = [](double, const Vec3&) { return Vec3::Zero(); };
  m.V = [A, v0](double, const Vec3& x) { return Vec3(A * x + v0); };
  m.dV_dt = [](double, const Vec3&) { return Vec3::Zero(); };
  m.grad_V = [A](double, const Vec3&) { return A; };
  m.lap_V = [](double, const Vec3&) { return Vec3::Zero(); };
  m.grad_div_V = [](double, const Vec3&) { return Vec3::Zero(); };
  return m;
}

inline std::vector<std::string> builtin_solutions() {
  return {"rest", "mms1", "affine"};
}

inline ManufacturedSolution make_builtin_solution(const std::string& name) {
  if (name == "rest") return make_rest();
  if (name == "mms1") return make_mms1();
  if (name == "affine") return make_affine();
  throw std::invalid_argument("unknown builtin solution '" + name + "'");
}

}  // namespace fvcr

#endif

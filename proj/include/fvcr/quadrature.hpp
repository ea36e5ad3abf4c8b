#ifndef FVCR_QUADRATURE_HPP
#define FVCR_QUADRATURE_HPP

#include <array>
#include <vector>

#include "fvcr/mesh.hpp"

namespace fvcr {

/// Quadrature rule on the reference tetrahedron, stored in barycentric
/// coordinates with weights summing to 1 (scale by |K| when integrating).
struct CellRule {
  std::vector<std::array<double, 4>> points;
  std::vector<double> weights;
  int degree = 0;

  /// 10-point rule, exact for polynomials of degree <= 3, all weights positive:
  /// one (a,b,b,b) orbit plus the six edge midpoints.
  static const CellRule& degree3() {
    static const CellRule rule = [] {
      CellRule r;
      r.degree = 3;
      const double a = 0.56843058419684545;
      const double b = 0.14385647193438486;
      const double w1 = 0.21776506988040614;
      const double w2 = 0.021489953413062566;
      for (int i = 0; i < 4; ++i) {
        std::array<double, 4> lam{b, b, b, b};
        lam[i] = a;
        r.points.push_back(lam);
        r.weights.push_back(w1);
      }
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
          std::array<double, 4> lam{0.0, 0.0, 0.0, 0.0};
          lam[i] = lam[j] = 0.5;
          r.points.push_back(lam);
          r.weights.push_back(w2);
        }
      return r;
    }();
    return rule;
  }
};

/// Quadrature rule on the reference triangle, barycentric, weights summing to 1.
struct FaceRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int degree = 0;

  /// 6-point rule, exact for degree <= 3, positive weights: the six
  /// permutations of the roots of t^3 - t^2 + t/4 - 1/60.
  static const FaceRule& degree3() {
    static const FaceRule rule = [] {
      FaceRule r;
      r.degree = 3;
      const double x[3] = {0.10903900907287735, 0.23193336855303046,
                           0.65902762237409207};
      static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
      for (const auto& p : perms) {
        r.points.push_back({x[p[0]], x[p[1]], x[p[2]]});
        r.weights.push_back(1.0 / 6.0);
      }
      return r;
    }();
    return rule;
  }
};

/// The pair of rules the discretization uses everywhere.
struct Quadrature {
  const CellRule& cell = CellRule::degree3();
  const FaceRule& face = FaceRule::degree3();
};

/// Integrates f over cell c: |K| sum w_q f(x_q).
template <class F>
double integrate_cell(const Mesh& mesh, int c, F&& f,
                      const CellRule& rule = CellRule::degree3()) {
  const auto v = mesh.cell_vertices(c);
  double s = 0.0;
  for (size_t q = 0; q < rule.points.size(); ++q) {
    const auto& lam = rule.points[q];
    const Vec3 x = lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2] + lam[3] * v[3];
    s += rule.weights[q] * f(x);
  }
  return s * mesh.cell(c).volume;
}

template <class F>
double cell_mean(const Mesh& mesh, int c, F&& f,
                 const CellRule& rule = CellRule::degree3()) {
  return integrate_cell(mesh, c, f, rule) / mesh.cell(c).volume;
}

/// Integrates f over face fidx: |sigma| sum w_q f(x_q).
template <class F>
auto integrate_face(const Mesh& mesh, int fidx, F&& f,
                    const FaceRule& rule = FaceRule::degree3())
    -> decltype(f(Vec3())) {
  const FaceRecord& fr = mesh.face(fidx);
  const Vec3& a = mesh.vertex(fr.vertices[0]);
  const Vec3& b = mesh.vertex(fr.vertices[1]);
  const Vec3& c = mesh.vertex(fr.vertices[2]);
  decltype(f(Vec3())) s = rule.weights[0] * f(rule.points[0][0] * a +
                                              rule.points[0][1] * b +
                                              rule.points[0][2] * c);
  for (size_t q = 1; q < rule.points.size(); ++q) {
    const auto& lam = rule.points[q];
    s += rule.weights[q] * f(lam[0] * a + lam[1] * b + lam[2] * c);
  }
  return fr.area * s;
}

template <class F>
auto face_mean(const Mesh& mesh, int fidx, F&& f,
               const FaceRule& rule = FaceRule::degree3())
    -> decltype(f(Vec3())) {
  return integrate_face(mesh, fidx, f, rule) / mesh.face(fidx).area;
}

}  // namespace fvcr

#endif

#ifndef FVCR_MESH_HPP
#define FVCR_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fvcr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown when a mesh violates conformity, positivity or orientation requirements.
class MeshError : public std::runtime_error {
public:
  explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

/// Axis-aligned box, used as the meshed domain for structured grids.
struct Box {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{1.0, 1.0, 1.0};

  double volume() const { return (hi - lo).prod(); }
  bool degenerate() const {
    return !((hi.array() - lo.array()) > 0.0).all();
  }
};

constexpr int kBoundary = -1;

/// Oriented face record. The stored unit normal points outward from the owner cell.
struct FaceRecord {
  std::array<int, 3> vertices{};
  int owner = kBoundary;
  int neighbor = kBoundary;  ///< kBoundary for exterior faces
  double area = 0.0;
  Vec3 normal = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();

  bool interior() const { return neighbor != kBoundary; }
};

/// Per-cell geometry: measures and the four incident faces, ordered so that
/// face k is opposite local vertex k (the ordering the CR basis relies on).
struct CellRecord {
  std::array<int, 4> vertices{};
  std::array<int, 4> faces{};
  std::array<double, 4> face_sign{};  ///< +1 owner, -1 neighbor
  double volume = 0.0;
  double diam = 0.0;
  double inradius = 0.0;
  Vec3 centroid = Vec3::Zero();
  std::array<Vec3, 4> grad_lambda{};  ///< gradients of the barycentric coordinates
};

struct RegularityReport {
  double min_inradius_over_diam = 0.0;
  double max_inradius_over_diam = 0.0;
  double min_diam_over_h = 0.0;
  double max_diam_over_h = 0.0;
};

/// Conforming tetrahedral mesh with oriented faces and cell/face measures.
/// Immutable after construction; all queries are const.
class Mesh {
public:
  /// Builds a mesh from raw vertex coordinates and tetrahedra, validating
  /// conformity, positivity and the per-cell closure identity.
  static Mesh from_cells(std::vector<Vec3> vertices,
                         std::vector<std::array<int, 4>> cells) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.build(std::move(cells));
    return m;
  }

  /// Kuhn subdivision of an axis-aligned box: n^3 subcubes, 6 tetrahedra each.
  static Mesh structured_cube(int n, const Box& extent = Box{}) {
    if (n < 1) throw MeshError("structured_cube: subdivision count must be >= 1");
    if (extent.degenerate()) throw MeshError("structured_cube: degenerate extent");

    const int np = n + 1;
    auto vid = [np](int i, int j, int k) { return (k * np + j) * np + i; };

    std::vector<Vec3> verts(static_cast<size_t>(np) * np * np);
    for (int k = 0; k < np; ++k)
      for (int j = 0; j < np; ++j)
        for (int i = 0; i < np; ++i) {
          Vec3 t(double(i) / n, double(j) / n, double(k) / n);
          verts[vid(i, j, k)] = extent.lo + (extent.hi - extent.lo).cwiseProduct(t);
        }

    // The 6 path tetrahedra of each subcube; identical vertex ordering in every
    // cube keeps the face diagonals consistent across cube boundaries.
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<std::array<int, 4>> cells;
    cells.reserve(static_cast<size_t>(6) * n * n * n);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const int base[3] = {i, j, k};
          for (const auto& p : perms) {
            int c[3] = {base[0], base[1], base[2]};
            std::array<int, 4> tet{};
            tet[0] = vid(c[0], c[1], c[2]);
            for (int s = 0; s < 3; ++s) {
              c[p[s]] += 1;
              tet[s + 1] = vid(c[0], c[1], c[2]);
            }
            cells.push_back(tet);
          }
        }

    Mesh m = from_cells(std::move(verts), std::move(cells));
    m.analytic_volume_ = extent.volume();
    const double vol_err = std::abs(m.total_volume() - m.analytic_volume_);
    if (vol_err > 1e-12 * m.analytic_volume_)
      throw MeshError("structured_cube: volume defect " + std::to_string(vol_err));
    return m;
  }

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  int n_faces() const { return static_cast<int>(faces_.size()); }
  int n_interior_faces() const { return static_cast<int>(interior_faces_.size()); }
  int n_boundary_faces() const { return n_faces() - n_interior_faces(); }

  const Vec3& vertex(int v) const { return vertices_[v]; }
  const CellRecord& cell(int c) const { return cells_[c]; }
  const FaceRecord& face(int f) const { return faces_[f]; }
  const std::vector<int>& interior_faces() const { return interior_faces_; }

  /// Position of face f in the compact interior ordering, -1 for boundary faces.
  int interior_index(int f) const { return interior_index_[f]; }

  /// Mesh size h = max_K diam[K].
  double h() const { return h_; }

  double total_volume() const {
    double v = 0.0;
    for (const auto& c : cells_) v += c.volume;
    return v;
  }

  /// Outward normal of face f as seen from cell c (one of its two sides).
  Vec3 outward_normal(int f, int c) const {
    const FaceRecord& fr = faces_[f];
    return (fr.owner == c) ? fr.normal : Vec3(-fr.normal);
  }

  /// Vertex positions of a cell.
  std::array<Vec3, 4> cell_vertices(int c) const {
    const auto& v = cells_[c].vertices;
    return {vertices_[v[0]], vertices_[v[1]], vertices_[v[2]], vertices_[v[3]]};
  }

  /// Barycentric coordinates of x with respect to cell c.
  std::array<double, 4> barycentric(int c, const Vec3& x) const {
    const CellRecord& cr = cells_[c];
    std::array<double, 4> lam{};
    for (int k = 0; k < 4; ++k)
      lam[k] = 0.25 + cr.grad_lambda[k].dot(x - cr.centroid);
    return lam;
  }

  RegularityReport regularity_report() const {
    RegularityReport r;
    r.min_inradius_over_diam = std::numeric_limits<double>::max();
    r.min_diam_over_h = std::numeric_limits<double>::max();
    for (const auto& c : cells_) {
      const double q = c.inradius / c.diam;
      const double d = c.diam / h_;
      r.min_inradius_over_diam = std::min(r.min_inradius_over_diam, q);
      r.max_inradius_over_diam = std::max(r.max_inradius_over_diam, q);
      r.min_diam_over_h = std::min(r.min_diam_over_h, d);
      r.max_diam_over_h = std::max(r.max_diam_over_h, d);
    }
    return r;
  }

  /// Analytic volume of the meshed domain when known (structured grids), else 0.
  double analytic_volume() const { return analytic_volume_; }

private:
  Mesh() = default;

  void build(std::vector<std::array<int, 4>> cell_vertices) {
    if (cell_vertices.empty()) throw MeshError("mesh has no cells");
    cells_.resize(cell_vertices.size());

    std::map<std::array<int, 3>, int> face_of;
    for (int c = 0; c < static_cast<int>(cell_vertices.size()); ++c) {
      CellRecord& cr = cells_[c];
      cr.vertices = cell_vertices[c];
      for (int k = 0; k < 4; ++k) {
        // face opposite local vertex k
        std::array<int, 3> tri{};
        int t = 0;
        for (int j = 0; j < 4; ++j)
          if (j != k) tri[t++] = cr.vertices[j];
        std::sort(tri.begin(), tri.end());
        if (tri[0] == tri[1] || tri[1] == tri[2])
          throw MeshError("cell " + std::to_string(c) + " has repeated vertices");

        auto it = face_of.find(tri);
        int f;
        if (it == face_of.end()) {
          f = static_cast<int>(faces_.size());
          face_of.emplace(tri, f);
          FaceRecord fr;
          fr.vertices = tri;
          fr.owner = c;
          faces_.push_back(fr);
        } else {
          f = it->second;
          FaceRecord& fr = faces_[f];
          if (fr.neighbor != kBoundary)
            throw MeshError("conformity violation: face {" + std::to_string(tri[0]) +
                            "," + std::to_string(tri[1]) + "," + std::to_string(tri[2]) +
                            "} shared by 3 cells (" + std::to_string(fr.owner) + "," +
                            std::to_string(fr.neighbor) + "," + std::to_string(c) + ")");
          fr.neighbor = c;
        }
        cr.faces[k] = f;
      }
    }

    // face geometry
    for (FaceRecord& fr : faces_) {
      const Vec3& a = vertices_[fr.vertices[0]];
      const Vec3& b = vertices_[fr.vertices[1]];
      const Vec3& d = vertices_[fr.vertices[2]];
      const Vec3 cr = (b - a).cross(d - a);
      fr.area = 0.5 * cr.norm();
      if (!(fr.area > 0.0))
        throw MeshError("degenerate face {" + std::to_string(fr.vertices[0]) + "," +
                        std::to_string(fr.vertices[1]) + "," +
                        std::to_string(fr.vertices[2]) + "}");
      fr.centroid = (a + b + d) / 3.0;
      fr.normal = cr.normalized();
    }

    // cell geometry, owner-outward orientation of face normals
    for (int c = 0; c < n_cells(); ++c) {
      CellRecord& cr = cells_[c];
      const auto v = cell_vertices_raw(cr);
      cr.volume = std::abs((v[1] - v[0]).dot((v[2] - v[0]).cross(v[3] - v[0]))) / 6.0;
      if (!(cr.volume > 0.0))
        throw MeshError("cell " + std::to_string(c) + " has nonpositive volume");
      cr.centroid = 0.25 * (v[0] + v[1] + v[2] + v[3]);
      cr.diam = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
          cr.diam = std::max(cr.diam, (v[i] - v[j]).norm());
      double area_sum = 0.0;
      for (int k = 0; k < 4; ++k) area_sum += faces_[cr.faces[k]].area;
      cr.inradius = 3.0 * cr.volume / area_sum;
    }
    for (FaceRecord& fr : faces_) {
      const Vec3 to_face = fr.centroid - cells_[fr.owner].centroid;
      if (fr.normal.dot(to_face) < 0.0) fr.normal = -fr.normal;
    }
    for (int c = 0; c < n_cells(); ++c) {
      CellRecord& cr = cells_[c];
      for (int k = 0; k < 4; ++k) {
        const FaceRecord& fr = faces_[cr.faces[k]];
        cr.face_sign[k] = (fr.owner == c) ? 1.0 : -1.0;
        // grad of barycentric coordinate k: points from face k toward vertex k
        cr.grad_lambda[k] =
            -(fr.area / (3.0 * cr.volume)) * cr.face_sign[k] * fr.normal;
      }
      // closure: sum |sigma| n_{sigma,K} = 0
      Vec3 closure = Vec3::Zero();
      double area_sum = 0.0;
      for (int k = 0; k < 4; ++k) {
        const FaceRecord& fr = faces_[cr.faces[k]];
        closure += fr.area * cr.face_sign[k] * fr.normal;
        area_sum += fr.area;
      }
      if (closure.lpNorm<Eigen::Infinity>() > 1e-12 * area_sum)
        throw MeshError("closure defect on cell " + std::to_string(c));
    }

    interior_index_.assign(faces_.size(), -1);
    for (int f = 0; f < n_faces(); ++f) {
      if (faces_[f].interior()) {
        interior_index_[f] = static_cast<int>(interior_faces_.size());
        interior_faces_.push_back(f);
      }
    }

    h_ = 0.0;
    for (const auto& c : cells_) h_ = std::max(h_, c.diam);
  }

  std::array<Vec3, 4> cell_vertices_raw(const CellRecord& cr) const {
    return {vertices_[cr.vertices[0]], vertices_[cr.vertices[1]],
            vertices_[cr.vertices[2]], vertices_[cr.vertices[3]]};
  }

  std::vector<Vec3> vertices_;
  std::vector<CellRecord> cells_;
  std::vector<FaceRecord> faces_;
  std::vector<int> interior_faces_;
  std::vector<int> interior_index_;
  double h_ = 0.0;
  double analytic_volume_ = 0.0;
};

inline RegularityReport regularity_report(const Mesh& mesh) {
  return mesh.regularity_report();
}

}  // namespace fvcr

#endif

#ifndef FVCR_VTK_IO_HPP
#define FVCR_VTK_IO_HPP

#include <fstream>
#include <string>

#include "fvcr/scheme.hpp"

namespace fvcr {

/// Legacy VTK ASCII unstructured grid with cell data: density and the
/// cell-averaged velocity. The face-based CR DOFs go to a companion file
/// "<base>_faces.vtk" as vertex points at the face centroids carrying the
/// face-mean velocity, face normal and area.
inline void write_vtk(const StepState& state, const Mesh& mesh,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  out.precision(12);

  out << "# vtk DataFile Version 3.0\n";
  out << "fvcr state t=" << state.time << "\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_vertices() << " double\n";
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vec3& x = mesh.vertex(v);
    out << x[0] << " " << x[1] << " " << x[2] << "\n";
  }
  out << "CELLS " << mesh.n_cells() << " " << 5 * mesh.n_cells() << "\n";
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& vv = mesh.cell(c).vertices;
    out << "4 " << vv[0] << " " << vv[1] << " " << vv[2] << " " << vv[3] << "\n";
  }
  out << "CELL_TYPES " << mesh.n_cells() << "\n";
  for (int c = 0; c < mesh.n_cells(); ++c) out << "10\n";

  out << "CELL_DATA " << mesh.n_cells() << "\n";
  out << "SCALARS density double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.n_cells(); ++c) out << state.rho[c] << "\n";
  out << "VECTORS velocity_mean double\n";
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Vec3 u = state.u.cell_mean(c);
    out << u[0] << " " << u[1] << " " << u[2] << "\n";
  }

  // companion: CR face DOFs
  std::string base = path;
  if (base.size() > 4 && base.substr(base.size() - 4) == ".vtk")
    base = base.substr(0, base.size() - 4);
  std::ofstream fout(base + "_faces.vtk");
  if (!fout) throw std::runtime_error("write_vtk: cannot open " + base + "_faces.vtk");
  fout.precision(12);
  fout << "# vtk DataFile Version 3.0\n";
  fout << "fvcr face DOFs t=" << state.time << "\n";
  fout << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  fout << "POINTS " << mesh.n_faces() << " double\n";
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Vec3& x = mesh.face(f).centroid;
    fout << x[0] << " " << x[1] << " " << x[2] << "\n";
  }
  fout << "CELLS " << mesh.n_faces() << " " << 2 * mesh.n_faces() << "\n";
  for (int f = 0; f < mesh.n_faces(); ++f) fout << "1 " << f << "\n";
  fout << "CELL_TYPES " << mesh.n_faces() << "\n";
  for (int f = 0; f < mesh.n_faces(); ++f) fout << "1\n";
  fout << "POINT_DATA " << mesh.n_faces() << "\n";
  fout << "VECTORS velocity_face double\n";
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Vec3& u = state.u.dofs[f];
    fout << u[0] << " " << u[1] << " " << u[2] << "\n";
  }
  fout << "VECTORS face_normal double\n";
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Vec3& n = mesh.face(f).normal;
    fout << n[0] << " " << n[1] << " " << n[2] << "\n";
  }
  fout << "SCALARS face_area double 1\nLOOKUP_TABLE default\n";
  for (int f = 0; f < mesh.n_faces(); ++f) fout << mesh.face(f).area << "\n";
}

}  // namespace fvcr

#endif

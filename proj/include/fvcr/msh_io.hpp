#ifndef FVCR_MSH_IO_HPP
#define FVCR_MSH_IO_HPP

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fvcr/mesh.hpp"

namespace fvcr {

/// Gmsh MSH parse failure; carries the offending line number.
class MshParseError : public std::runtime_error {
public:
  MshParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line_number(line) {}
  int line_number;
};

namespace detail {
inline std::string next_line(std::istream& in, int& lineno) {
  std::string line;
  if (!std::getline(in, line)) return {};
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}
}  // namespace detail

/// Imports an ASCII Gmsh MSH 2.2 mesh. Only 4-node tetrahedra are accepted as
/// volume elements; points, lines and triangles are skipped. All Mesh
/// invariants are validated on load.
inline Mesh import_msh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MshParseError(path, 0, "cannot open file");

  int lineno = 0;
  std::vector<Vec3> vertices;
  std::map<long, int> node_index;  // gmsh node ids may be non-contiguous
  std::vector<std::array<int, 4>> cells;
  bool saw_elements = false;

  auto fail = [&](const std::string& msg) -> MshParseError {
    return MshParseError(path, lineno, msg);
  };

  std::string line;
  while (in) {
    line = detail::next_line(in, lineno);
    if (line.empty()) {
      if (!in) break;
      continue;
    }
    if (line == "$MeshFormat") {
      line = detail::next_line(in, lineno);
      std::istringstream ls(line);
      std::string version;
      int file_type = -1, data_size = -1;
      if (!(ls >> version >> file_type >> data_size))
        throw fail("malformed $MeshFormat record");
      if (version.rfind("2.2", 0) != 0)
        throw fail("unsupported MSH version '" + version + "' (need 2.2)");
      if (file_type != 0) throw fail("binary MSH files are not supported");
      if (detail::next_line(in, lineno) != "$EndMeshFormat")
        throw fail("missing $EndMeshFormat");
    } else if (line == "$Nodes") {
      line = detail::next_line(in, lineno);
      long count = -1;
      {
        std::istringstream ls(line);
        if (!(ls >> count) || count < 0) throw fail("malformed node count");
      }
      for (long k = 0; k < count; ++k) {
        line = detail::next_line(in, lineno);
        std::istringstream ls(line);
        long id;
        double x, y, z;
        if (!(ls >> id >> x >> y >> z)) throw fail("malformed node record");
        if (!node_index.emplace(id, static_cast<int>(vertices.size())).second)
          throw fail("duplicate node id " + std::to_string(id));
        vertices.emplace_back(x, y, z);
      }
      if (detail::next_line(in, lineno) != "$EndNodes")
        throw fail("missing $EndNodes");
    } else if (line == "$Elements") {
      saw_elements = true;
      line = detail::next_line(in, lineno);
      long count = -1;
      {
        std::istringstream ls(line);
        if (!(ls >> count) || count < 0) throw fail("malformed element count");
      }
      for (long k = 0; k < count; ++k) {
        line = detail::next_line(in, lineno);
        std::istringstream ls(line);
        long id;
        int type, ntags;
        if (!(ls >> id >> type >> ntags)) throw fail("malformed element record");
        long tag;
        for (int t = 0; t < ntags; ++t)
          if (!(ls >> tag)) throw fail("malformed element tags");
        if (type == 4) {
          std::array<int, 4> tet{};
          for (int t = 0; t < 4; ++t) {
            long nid;
            if (!(ls >> nid)) throw fail("tetrahedron with fewer than 4 nodes");
            auto it = node_index.find(nid);
            if (it == node_index.end())
              throw fail("unknown node id " + std::to_string(nid));
            tet[t] = it->second;
          }
          cells.push_back(tet);
        } else if (type == 15 || type == 1 || type == 2 || type == 3) {
          // points, lines, triangles, quads: boundary markup, skipped
        } else {
          throw fail("unsupported volume element type " + std::to_string(type) +
                     " (only 4-node tetrahedra)");
        }
      }
      if (detail::next_line(in, lineno) != "$EndElements")
        throw fail("missing $EndElements");
    } else if (!line.empty() && line[0] == '$') {
      // skip unknown section
      const std::string end = "$End" + line.substr(1);
      while (in && (line = detail::next_line(in, lineno)) != end) {
      }
    }
  }

  if (!saw_elements) throw MshParseError(path, lineno, "no $Elements section");
  if (cells.empty()) throw MshParseError(path, lineno, "no tetrahedra");
  return Mesh::from_cells(std::move(vertices), std::move(cells));
}

/// Writes the mesh in ASCII Gmsh MSH 2.2 (tetrahedra only); inverse of import_msh.
inline void export_msh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_msh: cannot open " + path);
  out.precision(17);
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  out << "$Nodes\n" << mesh.n_vertices() << "\n";
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vec3& x = mesh.vertex(v);
    out << (v + 1) << " " << x[0] << " " << x[1] << " " << x[2] << "\n";
  }
  out << "$EndNodes\n$Elements\n" << mesh.n_cells() << "\n";
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& vv = mesh.cell(c).vertices;
    out << (c + 1) << " 4 2 1 1";
    for (int k = 0; k < 4; ++k) out << " " << (vv[k] + 1);
    out << "\n";
  }
  out << "$EndElements\n";
}

}  // namespace fvcr

#endif

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cagenet/binary_io.hpp"
#include "cagenet/mesh.hpp"

namespace cagenet {

namespace {

int resolve_index(const std::string& token, int vertex_count, int line) {
  // "i", "i/t", "i//n", "i/t/n"
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ObjParseError("malformed face index '" + token + "'", line);
  }
  if (idx == 0) throw ObjParseError("face index 0 is invalid in OBJ", line);
  const int resolved = idx > 0 ? idx - 1 : vertex_count + idx;
  if (resolved < 0 || resolved >= vertex_count) {
    throw ObjParseError("face index " + std::to_string(idx) + " out of range (" + std::to_string(vertex_count) +
                            " vertices defined)",
                        line);
  }
  return resolved;
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string tag;
    if (!(tokens >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(tokens >> p.x() >> p.y() >> p.z())) throw ObjParseError("malformed vertex", line_no);
      if (!p.allFinite()) throw ObjParseError("non-finite vertex", line_no);
      mesh.positions.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string token;
      while (tokens >> token) poly.push_back(resolve_index(token, static_cast<int>(mesh.positions.size()), line_no));
      if (poly.size() < 3) throw ObjParseError("face with fewer than 3 vertices", line_no);
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
    }
    // normals, texcoords, groups and materials are ignored
  }
  return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_obj(buffer.str());
}

std::string format_obj(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertex_count() * 40 + mesh.face_count() * 24);
  char buf[128];
  for (const Vec3& p : mesh.positions) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  for (const Face& f : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += buf;
  }
  return out;
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  write_file_atomic(path, format_obj(mesh));
}

}  // namespace cagenet

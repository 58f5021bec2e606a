#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "usinr/error.hpp"
#include "usinr/recon.hpp"

namespace usinr {

namespace {

Vec3 corner_pos(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

std::array<std::array<int, 2>, 12> build_edges() {
  std::array<std::array<int, 2>, 12> edges{};
  int e = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (int c = 0; c < 8; ++c)
      if (!(c & (1 << axis))) edges[e++] = {c, c | (1 << axis)};
  return edges;
}

int edge_between(const std::array<std::array<int, 2>, 12>& edges, int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((edges[e][0] == a && edges[e][1] == b) || (edges[e][0] == b && edges[e][1] == a)) return e;
  throw std::logic_error("marching cubes: corners do not share an edge");
}

// Builds the case table by tracing the iso-contour across the six cube faces.
// Ambiguous faces always separate the inside corners, a rule that depends only
// on the face itself, so neighbouring cubes agree and the surface is closed.
// Each face segment is directed so that (end - start) x face_normal points to
// the inside corners; chaining segments then yields outward-facing polygons.
// True when all three cube edges lie on one cube face.
bool share_face(const std::array<std::array<int, 2>, 12>& edges, int a, int b, int c) {
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side) {
      auto on = [&](int e) {
        return ((edges[e][0] >> axis) & 1) == side && ((edges[e][1] >> axis) & 1) == side;
      };
      if (on(a) && on(b) && on(c)) return true;
    }
  return false;
}

std::array<std::vector<std::array<int, 3>>, 256> build_table() {
  const auto edges = build_edges();
  std::array<std::vector<std::array<int, 3>>, 256> table;
  auto mid = [&](int e) -> Vec3 { return 0.5 * (corner_pos(edges[e][0]) + corner_pos(edges[e][1])); };

  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [&](int c) { return (mask >> c) & 1; };
    std::array<int, 12> next;
    next.fill(-1);
    for (int axis = 0; axis < 3; ++axis) {
      const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        std::array<int, 4> q;
        const int bits[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        for (int i = 0; i < 4; ++i)
          q[i] = (side << axis) | (bits[i][0] << b) | (bits[i][1] << c2);
        Vec3 face_normal = Vec3::Zero();
        face_normal[axis] = side ? 1.0 : -1.0;
        Vec3 face_center = Vec3::Constant(0.5);
        face_center[axis] = side;

        std::vector<int> crossed;  // local face edge k joins q[k] and q[k+1]
        for (int k = 0; k < 4; ++k)
          if (inside(q[k]) != inside(q[(k + 1) % 4])) crossed.push_back(k);

        auto add_segment = [&](int ea, int eb, const Vec3& toward_inside) {
          const Vec3 pa = mid(ea), pb = mid(eb);
          if ((pb - pa).cross(face_normal).dot(toward_inside) < 0.0) std::swap(ea, eb);
          if (next[ea] != -1) throw std::logic_error("marching cubes: inconsistent face segments");
          next[ea] = eb;
        };
        auto face_edge = [&](int k) { return edge_between(edges, q[k], q[(k + 1) % 4]); };

        if (crossed.size() == 2) {
          Vec3 in_c = Vec3::Zero(), out_c = Vec3::Zero();
          int n_in = 0, n_out = 0;
          for (int k = 0; k < 4; ++k) {
            if (inside(q[k])) {
              in_c += corner_pos(q[k]);
              ++n_in;
            } else {
              out_c += corner_pos(q[k]);
              ++n_out;
            }
          }
          add_segment(face_edge(crossed[0]), face_edge(crossed[1]), in_c / n_in - out_c / n_out);
        } else if (crossed.size() == 4) {
          for (int k = 0; k < 4; ++k) {
            if (!inside(q[k])) continue;
            add_segment(face_edge((k + 3) % 4), face_edge(k), corner_pos(q[k]) - face_center);
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] == -1 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        if (next[e] == -1) throw std::logic_error("marching cubes: open contour");
        used[e] = true;
        loop.push_back(e);
      }
      // Fan from a vertex that shares no face with the segments it spans;
      // otherwise a triangle could lie flat in a cube face and be duplicated
      // by the neighbouring cube.
      const size_t n = loop.size();
      int first = -1;
      for (size_t s = 0; s < n && first < 0; ++s) {
        bool ok = true;
        for (size_t i = 1; i + 1 < n && ok; ++i)
          ok = !share_face(edges, loop[s], loop[(s + i) % n], loop[(s + i + 1) % n]);
        if (ok) first = static_cast<int>(s);
      }
      if (first < 0) throw std::logic_error("marching cubes: no valid fan start");
      for (size_t i = 1; i + 1 < n; ++i)
        table[mask].push_back({loop[first], loop[(first + i) % n], loop[(first + i + 1) % n]});
    }
  }
  return table;
}

}  // namespace

const std::array<std::array<int, 2>, 12>& marching_cubes_edges() {
  static const auto edges = build_edges();
  return edges;
}

const std::array<std::vector<std::array<int, 3>>, 256>& marching_cubes_table() {
  static const auto table = build_table();
  return table;
}

TriangleMesh marching_cubes(const ScalarField& field, double iso) {
  field.validate();
  TriangleMesh mesh;
  const auto& g = field.grid;
  if (g.dims[0] < 2 || g.dims[1] < 2 || g.dims[2] < 2) return mesh;
  const auto [lo, hi] = std::minmax_element(field.values.begin(), field.values.end());
  if (!(iso >= *lo && iso < *hi)) return mesh;

  const auto& edges = marching_cubes_edges();
  const auto& table = marching_cubes_table();
  // Vertex id per (lower grid node, axis); key 3 marks a vertex snapped onto a node.
  std::unordered_map<size_t, int> vertex_of;
  auto edge_vertex = [&](int i, int j, int k, int e) {
    const int ca = edges[e][0], cb = edges[e][1];
    const int ia = i + (ca & 1), ja = j + ((ca >> 1) & 1), ka = k + ((ca >> 2) & 1);
    const int ib = i + (cb & 1), jb = j + ((cb >> 1) & 1), kb = k + ((cb >> 2) & 1);
    const int axis = (ca ^ cb) == 1 ? 0 : ((ca ^ cb) == 2 ? 1 : 2);
    const double va = field.at(ia, ja, ka), vb = field.at(ib, jb, kb);
    const double t = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
    size_t key = g.index(ia, ja, ka) * 4 + axis;
    if (t == 0.0) key = g.index(ia, ja, ka) * 4 + 3;
    if (t == 1.0) key = g.index(ib, jb, kb) * 4 + 3;
    auto it = vertex_of.find(key);
    if (it != vertex_of.end()) return it->second;
    const Vec3 pa = g.point(ia, ja, ka), pb = g.point(ib, jb, kb);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(t == 1.0 ? pb : pa + t * (pb - pa));
    vertex_of.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < g.dims[2]; ++k)
    for (int j = 0; j + 1 < g.dims[1]; ++j)
      for (int i = 0; i + 1 < g.dims[0]; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c)
          if (field.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > iso) mask |= 1 << c;
        if (mask == 0 || mask == 255) continue;
        for (const auto& tri : table[mask])
          mesh.triangles.push_back(
              {edge_vertex(i, j, k, tri[0]), edge_vertex(i, j, k, tri[1]), edge_vertex(i, j, k, tri[2])});
      }

  // Snapped vertices collapse some triangles; drop those and compact.
  std::vector<std::array<int, 3>> kept;
  kept.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles)
    if (t[0] != t[1] && t[1] != t[2] && t[0] != t[2]) kept.push_back(t);
  if (kept.size() != mesh.triangles.size()) {
    std::vector<int> remap(mesh.vertices.size(), -1);
    std::vector<Vec3> verts;
    for (auto& t : kept)
      for (int& v : t) {
        if (remap[v] < 0) {
          remap[v] = static_cast<int>(verts.size());
          verts.push_back(mesh.vertices[v]);
        }
        v = remap[v];
      }
    mesh.vertices = std::move(verts);
  }
  mesh.triangles = std::move(kept);
  return mesh;
}

}  // namespace usinr

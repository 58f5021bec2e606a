#include "usinr/mesh_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "usinr/error.hpp"

namespace usinr {

namespace {

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw DataError("cannot write " + path);
  os << std::setprecision(17);
  return os;
}

struct PlyHeader {
  size_t vertices = 0;
  size_t faces = 0;
  std::vector<std::string> vertex_props;
};

PlyHeader read_header(std::istream& is, const std::string& path) {
  PlyHeader h;
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw DataError(path + ": not a PLY file");
  std::string element;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw DataError(path + ": only ASCII PLY is supported");
    } else if (word == "element") {
      size_t count = 0;
      ls >> element >> count;
      if (element == "vertex") h.vertices = count;
      if (element == "face") h.faces = count;
    } else if (word == "property" && element == "vertex") {
      std::string type, name;
      ls >> type >> name;
      h.vertex_props.push_back(name);
    } else if (word == "end_header") {
      return h;
    }
  }
  throw DataError(path + ": missing end_header");
}

int prop_index(const PlyHeader& h, const std::string& name) {
  for (size_t i = 0; i < h.vertex_props.size(); ++i)
    if (h.vertex_props[i] == name) return static_cast<int>(i);
  return -1;
}

}  // namespace

void write_ply(const std::string& path, const TriangleMesh& mesh) {
  mesh.validate();
  const auto normals = mesh.normals.empty() ? mesh.compute_vertex_normals() : mesh.normals;
  auto os = open_out(path);
  os << "ply\nformat ascii 1.0\n"
     << "element vertex " << mesh.vertices.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\n"
     << "property double nx\nproperty double ny\nproperty double nz\n"
     << "element face " << mesh.triangles.size() << "\n"
     << "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    const auto& n = normals[i];
    os << v.x() << ' ' << v.y() << ' ' << v.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z()
       << '\n';
  }
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!os) throw DataError("failed writing " + path);
}

TriangleMesh read_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  const PlyHeader h = read_header(is, path);
  const int ix = prop_index(h, "x"), iy = prop_index(h, "y"), iz = prop_index(h, "z");
  const int inx = prop_index(h, "nx"), iny = prop_index(h, "ny"), inz = prop_index(h, "nz");
  if (ix < 0 || iy < 0 || iz < 0) throw DataError(path + ": vertex coordinates missing");
  TriangleMesh mesh;
  std::vector<double> row(h.vertex_props.size());
  for (size_t i = 0; i < h.vertices; ++i) {
    for (double& x : row)
      if (!(is >> x)) throw DataError(path + ": truncated vertex list");
    mesh.vertices.emplace_back(row[ix], row[iy], row[iz]);
    if (inx >= 0 && iny >= 0 && inz >= 0) mesh.normals.emplace_back(row[inx], row[iny], row[inz]);
  }
  for (size_t i = 0; i < h.faces; ++i) {
    int count = 0;
    if (!(is >> count)) throw DataError(path + ": truncated face list");
    if (count != 3) throw DataError(path + ": only triangle faces are supported");
    std::array<int, 3> t;
    if (!(is >> t[0] >> t[1] >> t[2])) throw DataError(path + ": truncated face list");
    mesh.triangles.push_back(t);
  }
  mesh.validate();
  return mesh;
}

void write_point_ply(const std::string& path, const LabeledPointCloud& cloud) {
  auto os = open_out(path);
  const bool with_normals = cloud.has_normals();
  os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) os << "property double nx\nproperty double ny\nproperty double nz\n";
  os << "property double probability\nend_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z();
    if (with_normals) {
      const auto& n = cloud.normals[i];
      os << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    os << ' ' << cloud.aorta_probability[i] << '\n';
  }
  if (!os) throw DataError("failed writing " + path);
}

LabeledPointCloud read_point_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  const PlyHeader h = read_header(is, path);
  const int ix = prop_index(h, "x"), iy = prop_index(h, "y"), iz = prop_index(h, "z");
  const int inx = prop_index(h, "nx"), iny = prop_index(h, "ny"), inz = prop_index(h, "nz");
  const int ip = prop_index(h, "probability");
  if (ix < 0 || iy < 0 || iz < 0) throw DataError(path + ": vertex coordinates missing");
  LabeledPointCloud cloud;
  std::vector<double> row(h.vertex_props.size());
  for (size_t i = 0; i < h.vertices; ++i) {
    for (double& x : row)
      if (!(is >> x)) throw DataError(path + ": truncated vertex list");
    cloud.points.emplace_back(row[ix], row[iy], row[iz]);
    cloud.aorta_probability.push_back(ip >= 0 ? row[ip] : 1.0);
    if (inx >= 0 && iny >= 0 && inz >= 0) cloud.normals.emplace_back(row[inx], row[iny], row[inz]);
  }
  cloud.validate();
  return cloud;
}

void write_raw_volume(const std::string& path, const ScalarField& field) {
  field.validate();
  {
    auto os = open_out(path, true);
    os.write(reinterpret_cast<const char*>(field.values.data()),
             static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (!os) throw DataError("failed writing " + path);
  }
  nlohmann::ordered_json meta;
  meta["format"] = "float64-le";
  meta["layout"] = "x-fastest";
  meta["origin_mm"] = {field.grid.origin.x(), field.grid.origin.y(), field.grid.origin.z()};
  meta["spacing_mm"] = field.grid.spacing;
  meta["dims"] = {field.grid.dims[0], field.grid.dims[1], field.grid.dims[2]};
  auto os = open_out(path + ".json");
  os << meta.dump(2) << '\n';
}

ScalarField read_raw_volume(const std::string& path) {
  std::ifstream ms(path + ".json");
  if (!ms) throw DataError("cannot open " + path + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ms);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ".json: " + e.what());
  }
  ScalarField f;
  const auto o = meta.at("origin_mm");
  f.grid.origin = Vec3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
  f.grid.spacing = meta.at("spacing_mm").get<double>();
  const auto d = meta.at("dims");
  f.grid.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
  f.values.resize(f.grid.point_count());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  is.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (!is) throw DataError(path + ": truncated volume");
  f.validate();
  return f;
}

}  // namespace usinr

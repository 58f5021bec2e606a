#include "usinr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "usinr/error.hpp"

namespace usinr {

RoughnessReport mesh_laplacian_roughness(const TriangleMesh& mesh, bool keep_per_vertex) {
  mesh.validate();
  if (mesh.vertices.size() < 4) throw DataError("roughness: mesh needs at least 4 vertices");
  const auto nb = mesh.vertex_neighbors();
  RoughnessReport rep;
  std::vector<double> mags;
  mags.reserve(mesh.vertices.size());
  if (keep_per_vertex) rep.per_vertex.assign(mesh.vertices.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (nb[v].size() < 3) {
      ++rep.excluded_count;
      continue;
    }
    Vec3 acc = Vec3::Zero();
    for (int u : nb[v]) acc += mesh.vertices[u] - mesh.vertices[v];
    const double mag = (acc / static_cast<double>(nb[v].size())).norm();
    mags.push_back(mag);
    if (keep_per_vertex) rep.per_vertex[v] = mag;
  }
  rep.vertex_count = mags.size();
  if (mags.empty()) return rep;
  double sum = 0.0;
  for (double m : mags) sum += m;
  rep.laplacian_average = sum / static_cast<double>(mags.size());
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  rep.laplacian_median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return rep;
}

std::vector<std::uint8_t> rasterize_mesh(const TriangleMesh& mesh, const GridSpec& grid) {
  mesh.validate();
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  std::vector<std::vector<double>> hits(static_cast<size_t>(nx) * ny);
  // Rays are nudged off the lattice so they never pass exactly through mesh edges.
  const double jx = 1.234567e-6 * grid.spacing, jy = 2.345678e-6 * grid.spacing;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const double xmin = std::min({a.x(), b.x(), c.x()}), xmax = std::max({a.x(), b.x(), c.x()});
    const double ymin = std::min({a.y(), b.y(), c.y()}), ymax = std::max({a.y(), b.y(), c.y()});
    const int i0 = std::max(0, static_cast<int>(std::ceil((xmin - jx - grid.origin.x()) / grid.spacing)));
    const int i1 = std::min(nx - 1, static_cast<int>(std::floor((xmax - jx - grid.origin.x()) / grid.spacing)));
    const int j0 = std::max(0, static_cast<int>(std::ceil((ymin - jy - grid.origin.y()) / grid.spacing)));
    const int j1 = std::min(ny - 1, static_cast<int>(std::floor((ymax - jy - grid.origin.y()) / grid.spacing)));
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (det == 0.0) continue;
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        const double px = grid.origin.x() + i * grid.spacing + jx;
        const double py = grid.origin.y() + j * grid.spacing + jy;
        const double l1 = ((px - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (py - a.y())) / det;
        const double l2 = ((b.x() - a.x()) * (py - a.y()) - (px - a.x()) * (b.y() - a.y())) / det;
        const double l0 = 1.0 - l1 - l2;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        hits[static_cast<size_t>(j) * nx + i].push_back(l0 * a.z() + l1 * b.z() + l2 * c.z());
      }
  }
  std::vector<std::uint8_t> mask(grid.point_count(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      auto& h = hits[static_cast<size_t>(j) * nx + i];
      if (h.size() < 2) continue;
      std::sort(h.begin(), h.end());
      for (int k = 0; k < nz; ++k) {
        const double z = grid.origin.z() + k * grid.spacing;
        const auto below = std::lower_bound(h.begin(), h.end(), z) - h.begin();
        if (below % 2 == 1) mask[grid.index(i, j, k)] = 1;
      }
    }
  return mask;
}

std::vector<std::uint8_t> rasterize_phantom(const PhantomSpec& phantom, const GridSpec& grid) {
  std::vector<std::uint8_t> mask(grid.point_count(), 0);
  for (int k = 0; k < grid.dims[2]; ++k)
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i)
        mask[grid.index(i, j, k)] = phantom.inside(grid.point(i, j, k)) ? 1 : 0;
  return mask;
}

double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw DataError("dice: masks differ in size");
  size_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    inter += (a[i] != 0) && (b[i] != 0);
  }
  if (na + nb == 0) return 0.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double dice_against_phantom(const std::vector<std::uint8_t>& mask, const GridSpec& grid,
                            const PhantomSpec& phantom) {
  return dice(mask, rasterize_phantom(phantom, grid));
}

double dice_against_phantom(const TriangleMesh& mesh, const GridSpec& grid, const PhantomSpec& phantom) {
  return dice_against_phantom(rasterize_mesh(mesh, grid), grid, phantom);
}

RadialError radial_error(const TriangleMesh& mesh, const PhantomSpec& phantom, double end_margin_mm) {
  RadialError err;
  double sum = 0.0;
  const double len = phantom.length_mm();
  for (const auto& v : mesh.vertices) {
    const auto pr = phantom.project(v);
    if (pr.beyond_ends || pr.arclength_mm < end_margin_mm || pr.arclength_mm > len - end_margin_mm) {
      ++err.excluded;
      continue;
    }
    const double e = std::abs(pr.distance_mm - phantom.radius_at(pr.arclength_mm));
    sum += e;
    err.max_mm = std::max(err.max_mm, e);
    ++err.evaluated;
  }
  if (err.evaluated) err.mean_mm = sum / static_cast<double>(err.evaluated);
  return err;
}

MeshReportRow evaluate_mesh(const std::string& name, const TriangleMesh& mesh, const GridSpec& grid,
                            const PhantomSpec& phantom, double end_margin_mm) {
  MeshReportRow row;
  row.mesh = name;
  const auto rough = mesh_laplacian_roughness(mesh);
  row.laplacian_average = rough.laplacian_average;
  row.laplacian_median = rough.laplacian_median;
  row.vertex_count = mesh.vertices.size();
  row.dice = dice_against_phantom(mesh, grid, phantom);
  const auto rad =
      radial_error(mesh, phantom, end_margin_mm < 0.0 ? phantom.base_radius_mm : end_margin_mm);
  row.radial_mean_mm = rad.mean_mm;
  row.radial_max_mm = rad.max_mm;
  return row;
}

void write_report_csv(const std::string& path, const std::vector<MeshReportRow>& rows) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "mesh,laplacian_average,laplacian_median,vertex_count,dice,radial_mean_mm,radial_max_mm\n";
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.mesh << ',' << r.laplacian_average << ',' << r.laplacian_median << ',' << r.vertex_count
       << ',' << r.dice << ',' << r.radial_mean_mm << ',' << r.radial_max_mm << '\n';
}

std::vector<MeshReportRow> read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::vector<MeshReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MeshReportRow r;
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw DataError(path + ": malformed report row");
    r.mesh = cells[0];
    r.laplacian_average = std::stod(cells[1]);
    r.laplacian_median = std::stod(cells[2]);
    r.vertex_count = std::stoul(cells[3]);
    r.dice = std::stod(cells[4]);
    r.radial_mean_mm = std::stod(cells[5]);
    r.radial_max_mm = std::stod(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

std::string format_report_text(const std::vector<MeshReportRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "mesh" << std::right << std::setw(12) << "lap_avg"
     << std::setw(12) << "lap_median" << std::setw(10) << "vertices" << std::setw(8) << "dice"
     << std::setw(12) << "radial_mean" << std::setw(12) << "radial_max" << '\n';
  os << std::fixed;
  for (const auto& r : rows)
    os << std::left << std::setw(12) << r.mesh << std::right << std::setprecision(4) << std::setw(12)
       << r.laplacian_average << std::setw(12) << r.laplacian_median << std::setw(10)
       << r.vertex_count << std::setprecision(3) << std::setw(8) << r.dice << std::setw(12)
       << r.radial_mean_mm << std::setw(12) << r.radial_max_mm << '\n';
  return os.str();
}

}  // namespace usinr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usinr/phantom.hpp"
#include "usinr/recon.hpp"

namespace usinr {

struct RoughnessReport {
  double laplacian_average = 0.0;
  double laplacian_median = 0.0;
  size_t vertex_count = 0;     // vertices evaluated (>= 3 neighbours)
  size_t excluded_count = 0;   // vertices with fewer than 3 neighbours
  std::vector<double> per_vertex;  // filled on request; NaN for excluded vertices
};

/// Uniform (umbrella) Laplacian magnitudes |mean(u - v)| over 1-ring neighbours.
/// Throws DataError for meshes with fewer than 4 vertices.
RoughnessReport mesh_laplacian_roughness(const TriangleMesh& mesh, bool keep_per_vertex = false);

/// Inside-mask of a closed mesh on the grid points (parity of ray crossings along z).
std::vector<std::uint8_t> rasterize_mesh(const TriangleMesh& mesh, const GridSpec& grid);

/// Analytic inside-tube indicator at the grid points.
std::vector<std::uint8_t> rasterize_phantom(const PhantomSpec& phantom, const GridSpec& grid);

/// 2|A n B| / (|A| + |B|); 0 when both are empty.
double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

double dice_against_phantom(const std::vector<std::uint8_t>& mask, const GridSpec& grid,
                            const PhantomSpec& phantom);
double dice_against_phantom(const TriangleMesh& mesh, const GridSpec& grid, const PhantomSpec& phantom);

struct RadialError {
  double mean_mm = 0.0;
  double max_mm = 0.0;
  size_t evaluated = 0;
  size_t excluded = 0;
};

/// Per vertex |distance to centerline - radius at the nearest arclength|.
/// Vertices projecting beyond the centerline, or within `end_margin_mm` of
/// either end (the cap region of a closed reconstruction), are excluded.
RadialError radial_error(const TriangleMesh& mesh, const PhantomSpec& phantom, double end_margin_mm = 0.0);

struct MeshReportRow {
  std::string mesh;
  double laplacian_average = 0.0;
  double laplacian_median = 0.0;
  size_t vertex_count = 0;
  double dice = 0.0;
  double radial_mean_mm = 0.0;
  double radial_max_mm = 0.0;
};

/// Roughness, Dice on `grid` and radial error (end margin defaults to the base radius).
MeshReportRow evaluate_mesh(const std::string& name, const TriangleMesh& mesh, const GridSpec& grid,
                            const PhantomSpec& phantom, double end_margin_mm = -1.0);

void write_report_csv(const std::string& path, const std::vector<MeshReportRow>& rows);
std::vector<MeshReportRow> read_report_csv(const std::string& path);
std::string format_report_text(const std::vector<MeshReportRow>& rows);

}  // namespace usinr

#pragma once

#include <string>

#include "usinr/recon.hpp"

namespace usinr {

/// ASCII PLY: element vertex (x y z nx ny nz), element face (vertex_indices).
/// Normals are computed from the winding when the mesh carries none.
void write_ply(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_ply(const std::string& path);

/// Raw little-endian float64 values (x fastest) plus a JSON sidecar `<path>.json`
/// with origin, spacing and dims.
void write_raw_volume(const std::string& path, const ScalarField& field);
ScalarField read_raw_volume(const std::string& path);

/// Point cloud as ASCII PLY with optional normals and a probability property.
void write_point_ply(const std::string& path, const LabeledPointCloud& cloud);
LabeledPointCloud read_point_ply(const std::string& path);

}  // namespace usinr

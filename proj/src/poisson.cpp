#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "usinr/error.hpp"
#include "usinr/recon.hpp"

namespace usinr {

namespace {

// y = -L x for the 7-point Neumann graph Laplacian, scaled by h^2 (positive semidefinite).
void apply_neg_laplacian(const GridSpec& g, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const size_t sx = 1, sy = static_cast<size_t>(nx), sz = static_cast<size_t>(nx) * ny;
  y.resize(x.size());
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j) {
      size_t idx = g.index(0, j, k);
      for (int i = 0; i < nx; ++i, ++idx) {
        const double c = x[idx];
        double acc = 0.0;
        if (i > 0) acc += c - x[idx - sx];
        if (i + 1 < nx) acc += c - x[idx + sx];
        if (j > 0) acc += c - x[idx - sy];
        if (j + 1 < ny) acc += c - x[idx + sy];
        if (k > 0) acc += c - x[idx - sz];
        if (k + 1 < nz) acc += c - x[idx + sz];
        y[idx] = acc;
      }
    }
}

void remove_mean(Eigen::VectorXd& v) { v.array() -= v.mean(); }

}  // namespace

PoissonResult poisson_reconstruct(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                                  const PoissonParams& params) {
  if (points.empty()) throw DataError("poisson_reconstruct: no points");
  if (normals.size() != points.size()) throw DataError("poisson_reconstruct: normals missing");
  for (const auto& n : normals)
    if (std::abs(n.norm() - 1.0) > 1e-6) throw DataError("poisson_reconstruct: normals must be unit");
  if (!(params.grid_resolution_mm > 0.0)) throw DataError("poisson_reconstruct: bad resolution");

  Vec3 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double h = params.grid_resolution_mm;
  const Vec3 pad = Vec3::Constant(params.padding_cells * h);
  PoissonResult res;
  GridSpec g = GridSpec::covering(lo - pad, hi + pad, h);
  // Make sure the upper padding is complete after flooring.
  for (int a = 0; a < 3; ++a)
    if (g.origin[a] + h * (g.dims[a] - 1) < hi[a] + pad[a]) ++g.dims[a];
  const size_t n = g.point_count();

  // Splat normals (the gradient field of an outward-decreasing indicator, negated).
  std::array<Eigen::VectorXd, 3> field;
  for (auto& f : field) f.setZero(static_cast<Eigen::Index>(n));
  std::array<size_t, 8> nodes;
  std::array<double, 8> w;
  for (size_t s = 0; s < points.size(); ++s) {
    trilinear_stencil(g, points[s], nodes, w);
    for (int c = 0; c < 8; ++c)
      for (int a = 0; a < 3; ++a) field[a][nodes[c]] += w[c] * normals[s][a];
  }

  // b = h^2 * (div V) with central differences; zero outside the grid.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  const size_t stride[3] = {1, static_cast<size_t>(g.dims[0]),
                            static_cast<size_t>(g.dims[0]) * g.dims[1]};
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const size_t idx = g.index(i, j, k);
        const int coord[3] = {i, j, k};
        double div = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double fwd = coord[a] + 1 < g.dims[a] ? field[a][idx + stride[a]] : 0.0;
          const double bwd = coord[a] > 0 ? field[a][idx - stride[a]] : 0.0;
          div += 0.5 * (fwd - bwd);
        }
        b[idx] = div * h;
      }
  // Inside-positive indicator: -L chi = div V_outward.
  remove_mean(b);
  const double b_norm = b.norm();
  const int side = *std::max_element(g.dims.begin(), g.dims.end());
  const int max_iters = params.max_iters > 0 ? params.max_iters : 10 * side;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  res.residual_history.push_back(1.0);
  if (b_norm == 0.0) throw DataError("poisson_reconstruct: normals produce no divergence");

  // Conjugate residual on the mean-free subspace, where -L is positive definite.
  Eigen::VectorXd r = b, p = r, ar, ap;
  apply_neg_laplacian(g, r, ar);
  remove_mean(ar);
  ap = ar;
  double r_ar = r.dot(ar);
  double rel = 1.0;
  int it = 0;
  while (rel > params.cg_tolerance && it < max_iters) {
    const double ap2 = ap.squaredNorm();
    if (ap2 <= 0.0) break;
    const double alpha = r_ar / ap2;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    apply_neg_laplacian(g, r, ar);
    remove_mean(ar);
    const double r_ar_next = r.dot(ar);
    const double beta = r_ar_next / r_ar;
    r_ar = r_ar_next;
    p = r + beta * p;
    ap = ar + beta * ap;
    ++it;
    rel = r.norm() / b_norm;
    res.residual_history.push_back(rel);
    if (!std::isfinite(rel)) throw NumericError("poisson_reconstruct: solver produced non-finite residual");
  }
  // Report the true residual of the returned solution.
  Eigen::VectorXd check;
  apply_neg_laplacian(g, x, check);
  remove_mean(check);
  res.relative_residual = (b - check).norm() / b_norm;
  res.iterations = it;
  if (res.relative_residual > params.cg_tolerance) {
    std::ostringstream os;
    os << "poisson_reconstruct: no convergence within " << max_iters << " iterations (residual "
       << res.relative_residual << ")";
    throw NumericError(os.str());
  }
  res.field.grid = g;
  res.field.values.assign(x.data(), x.data() + x.size());
  double iso = 0.0;
  for (const auto& p : points) iso += res.field.sample(p);
  res.iso_value = iso / static_cast<double>(points.size());
  return res;
}

}  // namespace usinr

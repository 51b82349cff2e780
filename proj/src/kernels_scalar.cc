#include <cmath>

#include "scalemm/kernels.h"

namespace scalemm::kernels::scalar {
namespace {

// Literal u_k . f with the monomial row spelled out.
void epipolar_forms(const EpipolarRows& rows, const Vec9& f, const Vec9& g,
                    std::span<double> out_f, std::span<double> out_g) {
  const std::size_t n = rows.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double xi = rows.xi[k], yi = rows.yi[k], xj = rows.xj[k], yj = rows.yj[k];
    const double u[9] = {xi * xj, xi * yj, xi, yi * xj, yi * yj, yi, xj, yj, 1.0};
    double sf = 0.0, sg = 0.0;
    for (int m = 0; m < 9; ++m) {
      sf += u[m] * f[m];
      sg += u[m] * g[m];
    }
    out_f[k] = sf;
    out_g[k] = sg;
  }
}

Moments masked_moments(std::span<const double> uf, std::span<const double> ug,
                       std::span<const std::uint8_t> mask) {
  Moments m;
  const bool all = mask.empty();
  for (std::size_t k = 0; k < uf.size(); ++k) {
    if (!all && !mask[k]) continue;
    m.ff += uf[k] * uf[k];
    m.fg += uf[k] * ug[k];
    m.gg += ug[k] * ug[k];
    ++m.count;
  }
  return m;
}

void abs_residuals(std::span<const double> uf, std::span<const double> ug, double s,
                   std::span<double> out) {
  for (std::size_t k = 0; k < uf.size(); ++k) out[k] = std::abs(s * uf[k] + ug[k]);
}

Moments threshold_mask(std::span<const double> uf, std::span<const double> ug, double s,
                       double threshold, std::span<const std::uint8_t> base,
                       std::span<std::uint8_t> out) {
  const bool all = base.empty();
  Moments m;
  for (std::size_t k = 0; k < uf.size(); ++k) {
    const bool keep = (all || base[k]) && std::abs(s * uf[k] + ug[k]) <= threshold;
    out[k] = keep ? 1 : 0;
    if (!keep) continue;
    m.ff += uf[k] * uf[k];
    m.fg += uf[k] * ug[k];
    m.gg += ug[k] * ug[k];
    ++m.count;
  }
  return m;
}

void project_points(const Mat3& R, const Vec3& t, std::span<const double> X,
                    std::span<const double> Y, std::span<const double> Z,
                    std::span<double> out_x, std::span<double> out_y, std::span<double> out_z) {
  for (std::size_t k = 0; k < X.size(); ++k) {
    const double xc = R(0, 0) * X[k] + R(0, 1) * Y[k] + R(0, 2) * Z[k] + t[0];
    const double yc = R(1, 0) * X[k] + R(1, 1) * Y[k] + R(1, 2) * Z[k] + t[1];
    const double zc = R(2, 0) * X[k] + R(2, 1) * Y[k] + R(2, 2) * Z[k] + t[2];
    out_x[k] = xc / zc;
    out_y[k] = yc / zc;
    out_z[k] = zc;
  }
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable table{epipolar_forms, masked_moments, abs_residuals, threshold_mask,
                                 project_points};
  return table;
}

}  // namespace scalemm::kernels::scalar

#pragma once

// Data-parallel inner loops of the estimator and the simulator.
//
// Each kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant selected at runtime. The two are tested for equivalence; they are
// not bit-identical because FMA contraction and lane-wise summation change
// rounding.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "scalemm/geometry.h"

namespace scalemm::kernels {

enum class Backend { kScalar, kAvx2 };

std::string_view to_string(Backend backend);

bool backend_available(Backend backend);

// Backend used by the dispatching entry points. Resolved once from CPU
// features; SCALEMM_SIMD=scalar in the environment forces the reference path.
Backend active_backend();

// Overrides the active backend for the calling process. Passing nullopt
// restores automatic selection. Intended for tests and benchmarks.
void force_backend(std::optional<Backend> backend);

// Normalized coordinates of n correspondences in structure-of-arrays form.
struct EpipolarRows {
  std::span<const double> xi, yi, xj, yj;

  std::size_t size() const { return xi.size(); }
};

struct Moments {
  double ff = 0.0;  // sum (u.f)^2
  double fg = 0.0;  // sum (u.f)(u.g)
  double gg = 0.0;  // sum (u.g)^2
  std::size_t count = 0;
};

// Signature table shared by every backend.
struct KernelTable {
  // out_f[k] = u_k . f and out_g[k] = u_k . g.
  void (*epipolar_forms)(const EpipolarRows& rows, const Vec9& f, const Vec9& g,
                         std::span<double> out_f, std::span<double> out_g);
  // Moments over rows with mask[k] != 0, or over all rows when mask is empty.
  Moments (*masked_moments)(std::span<const double> uf, std::span<const double> ug,
                            std::span<const std::uint8_t> mask);
  // out[k] = |s * uf[k] + ug[k]|.
  void (*abs_residuals)(std::span<const double> uf, std::span<const double> ug, double s,
                        std::span<double> out);
  // out[k] = base[k] && |s * uf[k] + ug[k]| <= threshold; returns the moments
  // of the kept rows. An empty base means every row is eligible.
  Moments (*threshold_mask)(std::span<const double> uf, std::span<const double> ug, double s,
                                double threshold, std::span<const std::uint8_t> base,
                                std::span<std::uint8_t> out);
  // Rigid transform followed by perspective division: for each point,
  // (X', Y', Z') = R (X, Y, Z) + t, then x = X'/Z', y = Y'/Z', z = Z'.
  void (*project_points)(const Mat3& R, const Vec3& t, std::span<const double> X,
                         std::span<const double> Y, std::span<const double> Z,
                         std::span<double> out_x, std::span<double> out_y,
                         std::span<double> out_z);
};

const KernelTable& table(Backend backend);
inline const KernelTable& active() { return table(active_backend()); }

// Convenience wrappers over the active backend.
inline void epipolar_forms(const EpipolarRows& rows, const Vec9& f, const Vec9& g,
                           std::span<double> out_f, std::span<double> out_g) {
  active().epipolar_forms(rows, f, g, out_f, out_g);
}
inline Moments masked_moments(std::span<const double> uf, std::span<const double> ug,
                              std::span<const std::uint8_t> mask = {}) {
  return active().masked_moments(uf, ug, mask);
}
inline void abs_residuals(std::span<const double> uf, std::span<const double> ug, double s,
                          std::span<double> out) {
  active().abs_residuals(uf, ug, s, out);
}
inline Moments threshold_mask(std::span<const double> uf, std::span<const double> ug, double s,
                              double threshold, std::span<const std::uint8_t> base,
                              std::span<std::uint8_t> out) {
  return active().threshold_mask(uf, ug, s, threshold, base, out);
}
inline void project_points(const Mat3& R, const Vec3& t, std::span<const double> X,
                           std::span<const double> Y, std::span<const double> Z,
                           std::span<double> out_x, std::span<double> out_y,
                           std::span<double> out_z) {
  active().project_points(R, t, X, Y, Z, out_x, out_y, out_z);
}

namespace scalar {
const KernelTable& kernels();
}

#if defined(SCALEMM_HAVE_AVX2)
namespace avx2 {
const KernelTable& kernels();
}
#endif

}  // namespace scalemm::kernels

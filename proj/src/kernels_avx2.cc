// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "scalemm/kernels.h"

namespace scalemm::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

inline __m256d abs_pd(__m256d v) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  return _mm256_andnot_pd(sign, v);
}

// Four mask bytes widened to 0.0 / 1.0 lanes.
inline __m256d load_mask4(const std::uint8_t* m) {
  std::int32_t raw;
  __builtin_memcpy(&raw, m, sizeof(raw));
  const __m128i bytes = _mm_cvtsi32_si128(raw);
  const __m128i ints = _mm_min_epu32(_mm_cvtepu8_epi32(bytes), _mm_set1_epi32(1));
  return _mm256_cvtepi32_pd(ints);
}

// Bilinear form p_j^T F p_i with F the column-unstacked 9-vector: the inner
// contraction over p_j gives one weight per component of p_i.
void epipolar_forms(const EpipolarRows& rows, const Vec9& f, const Vec9& g,
                    std::span<double> out_f, std::span<double> out_g) {
  const double* fp = f.data();
  const double* gp = g.data();
  const std::size_t n = rows.size();
  const double* xi = rows.xi.data();
  const double* yi = rows.yi.data();
  const double* xj = rows.xj.data();
  const double* yj = rows.yj.data();

  __m256d fc[9], gc[9];
  for (int m = 0; m < 9; ++m) {
    fc[m] = _mm256_set1_pd(fp[m]);
    gc[m] = _mm256_set1_pd(gp[m]);
  }

  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d vxi = _mm256_loadu_pd(xi + k);
    const __m256d vyi = _mm256_loadu_pd(yi + k);
    const __m256d vxj = _mm256_loadu_pd(xj + k);
    const __m256d vyj = _mm256_loadu_pd(yj + k);

    __m256d w0 = _mm256_fmadd_pd(fc[0], vxj, _mm256_fmadd_pd(fc[1], vyj, fc[2]));
    __m256d w1 = _mm256_fmadd_pd(fc[3], vxj, _mm256_fmadd_pd(fc[4], vyj, fc[5]));
    __m256d w2 = _mm256_fmadd_pd(fc[6], vxj, _mm256_fmadd_pd(fc[7], vyj, fc[8]));
    _mm256_storeu_pd(out_f.data() + k, _mm256_fmadd_pd(w0, vxi, _mm256_fmadd_pd(w1, vyi, w2)));

    w0 = _mm256_fmadd_pd(gc[0], vxj, _mm256_fmadd_pd(gc[1], vyj, gc[2]));
    w1 = _mm256_fmadd_pd(gc[3], vxj, _mm256_fmadd_pd(gc[4], vyj, gc[5]));
    w2 = _mm256_fmadd_pd(gc[6], vxj, _mm256_fmadd_pd(gc[7], vyj, gc[8]));
    _mm256_storeu_pd(out_g.data() + k, _mm256_fmadd_pd(w0, vxi, _mm256_fmadd_pd(w1, vyi, w2)));
  }
  for (; k < n; ++k) {
    double wf[3], wg[3];
    for (int a = 0; a < 3; ++a) {
      wf[a] = std::fma(fp[3 * a], xj[k], std::fma(fp[3 * a + 1], yj[k], fp[3 * a + 2]));
      wg[a] = std::fma(gp[3 * a], xj[k], std::fma(gp[3 * a + 1], yj[k], gp[3 * a + 2]));
    }
    out_f[k] = std::fma(wf[0], xi[k], std::fma(wf[1], yi[k], wf[2]));
    out_g[k] = std::fma(wg[0], xi[k], std::fma(wg[1], yi[k], wg[2]));
  }
}

Moments masked_moments(std::span<const double> uf, std::span<const double> ug,
                       std::span<const std::uint8_t> mask) {
  const std::size_t n = uf.size();
  const bool all = mask.empty();
  __m256d ff = _mm256_setzero_pd();
  __m256d fg = _mm256_setzero_pd();
  __m256d gg = _mm256_setzero_pd();
  std::size_t count = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d a = _mm256_loadu_pd(uf.data() + k);
    __m256d b = _mm256_loadu_pd(ug.data() + k);
    if (!all) {
      const __m256d w = load_mask4(mask.data() + k);
      a = _mm256_mul_pd(a, w);
      b = _mm256_mul_pd(b, w);
      count += static_cast<std::size_t>((mask[k] != 0) + (mask[k + 1] != 0) +
                                        (mask[k + 2] != 0) + (mask[k + 3] != 0));
    } else {
      count += 4;
    }
    ff = _mm256_fmadd_pd(a, a, ff);
    fg = _mm256_fmadd_pd(a, b, fg);
    gg = _mm256_fmadd_pd(b, b, gg);
  }
  Moments m{hsum(ff), hsum(fg), hsum(gg), count};
  for (; k < n; ++k) {
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
  const std::size_t n = uf.size();
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d e =
        _mm256_fmadd_pd(vs, _mm256_loadu_pd(uf.data() + k), _mm256_loadu_pd(ug.data() + k));
    _mm256_storeu_pd(out.data() + k, abs_pd(e));
  }
  for (; k < n; ++k) out[k] = std::abs(std::fma(s, uf[k], ug[k]));
}

Moments threshold_mask(std::span<const double> uf, std::span<const double> ug, double s,
                       double threshold, std::span<const std::uint8_t> base,
                       std::span<std::uint8_t> out) {
  // Mask bytes for each 4-bit keep pattern, little-endian.
  static constexpr std::uint32_t kBytes[16] = {
      0x00000000, 0x00000001, 0x00000100, 0x00000101, 0x00010000, 0x00010001,
      0x00010100, 0x00010101, 0x01000000, 0x01000001, 0x01000100, 0x01000101,
      0x01010000, 0x01010001, 0x01010100, 0x01010101};
  const std::size_t n = uf.size();
  const bool all = base.empty();
  const __m256d vs = _mm256_set1_pd(s);
  const __m256d vt = _mm256_set1_pd(threshold);
  const __m256d zero = _mm256_setzero_pd();
  __m256d ff = zero, fg = zero, gg = zero;
  std::size_t count = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d a = _mm256_loadu_pd(uf.data() + k);
    const __m256d b = _mm256_loadu_pd(ug.data() + k);
    __m256d keep = _mm256_cmp_pd(abs_pd(_mm256_fmadd_pd(vs, a, b)), vt, _CMP_LE_OQ);
    if (!all) keep = _mm256_and_pd(keep, _mm256_cmp_pd(load_mask4(base.data() + k), zero, _CMP_NEQ_OQ));
    const int bits = _mm256_movemask_pd(keep);
    __builtin_memcpy(out.data() + k, &kBytes[bits], 4);
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(bits)));
    const __m256d ka = _mm256_and_pd(a, keep);
    const __m256d kb = _mm256_and_pd(b, keep);
    ff = _mm256_fmadd_pd(ka, ka, ff);
    fg = _mm256_fmadd_pd(ka, kb, fg);
    gg = _mm256_fmadd_pd(kb, kb, gg);
  }
  Moments m{hsum(ff), hsum(fg), hsum(gg), count};
  for (; k < n; ++k) {
    const bool keep = (all || base[k]) && std::abs(std::fma(s, uf[k], ug[k])) <= threshold;
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
  const double* r = R.data();  // column-major
  const __m256d r00 = _mm256_set1_pd(r[0]), r10 = _mm256_set1_pd(r[1]), r20 = _mm256_set1_pd(r[2]);
  const __m256d r01 = _mm256_set1_pd(r[3]), r11 = _mm256_set1_pd(r[4]), r21 = _mm256_set1_pd(r[5]);
  const __m256d r02 = _mm256_set1_pd(r[6]), r12 = _mm256_set1_pd(r[7]), r22 = _mm256_set1_pd(r[8]);
  const double* tp = t.data();
  const __m256d t0 = _mm256_set1_pd(tp[0]), t1 = _mm256_set1_pd(tp[1]), t2 = _mm256_set1_pd(tp[2]);

  const std::size_t n = X.size();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d x = _mm256_loadu_pd(X.data() + k);
    const __m256d y = _mm256_loadu_pd(Y.data() + k);
    const __m256d z = _mm256_loadu_pd(Z.data() + k);
    const __m256d xc = _mm256_fmadd_pd(r00, x, _mm256_fmadd_pd(r01, y, _mm256_fmadd_pd(r02, z, t0)));
    const __m256d yc = _mm256_fmadd_pd(r10, x, _mm256_fmadd_pd(r11, y, _mm256_fmadd_pd(r12, z, t1)));
    const __m256d zc = _mm256_fmadd_pd(r20, x, _mm256_fmadd_pd(r21, y, _mm256_fmadd_pd(r22, z, t2)));
    _mm256_storeu_pd(out_x.data() + k, _mm256_div_pd(xc, zc));
    _mm256_storeu_pd(out_y.data() + k, _mm256_div_pd(yc, zc));
    _mm256_storeu_pd(out_z.data() + k, zc);
  }
  for (; k < n; ++k) {
    const double xc = std::fma(r[0], X[k], std::fma(r[3], Y[k], std::fma(r[6], Z[k], tp[0])));
    const double yc = std::fma(r[1], X[k], std::fma(r[4], Y[k], std::fma(r[7], Z[k], tp[1])));
    const double zc = std::fma(r[2], X[k], std::fma(r[5], Y[k], std::fma(r[8], Z[k], tp[2])));
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

}  // namespace scalemm::kernels::avx2

#include "tflow/superop.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace tflow::simd {

#if defined(__aarch64__)
namespace {

// NEON float64x2 kernels, same row-major scheme as the AVX2 path but with
// 2-wide vectors (8 per 16-entry row half). Compiled only on aarch64 where
// NEON is baseline, so no runtime probe is needed beyond the #ifdef.
inline void mm_row_neon(int r, double* cre, double* cim, const double* are, const double* aim,
                        const double* bre, const double* bim, bool accumulate) {
  float64x2_t cr[8], ci[8];
  for (int q = 0; q < 8; ++q) {
    if (accumulate) {
      cr[q] = vld1q_f64(cre + r * 16 + 2 * q);
      ci[q] = vld1q_f64(cim + r * 16 + 2 * q);
    } else {
      cr[q] = vdupq_n_f64(0.0);
      ci[q] = vdupq_n_f64(0.0);
    }
  }
  for (int k = 0; k < 16; ++k) {
    const float64x2_t ar = vdupq_n_f64(are[r * 16 + k]);
    const float64x2_t ai = vdupq_n_f64(aim[r * 16 + k]);
    for (int q = 0; q < 8; ++q) {
      const float64x2_t br = vld1q_f64(bre + k * 16 + 2 * q);
      const float64x2_t bi = vld1q_f64(bim + k * 16 + 2 * q);
      cr[q] = vfmaq_f64(cr[q], ar, br);
      cr[q] = vfmsq_f64(cr[q], ai, bi);
      ci[q] = vfmaq_f64(ci[q], ar, bi);
      ci[q] = vfmaq_f64(ci[q], ai, br);
    }
  }
  for (int q = 0; q < 8; ++q) {
    vst1q_f64(cre + r * 16 + 2 * q, cr[q]);
    vst1q_f64(cim + r * 16 + 2 * q, ci[q]);
  }
}

void mm_neon(double* cre, double* cim, const double* are, const double* aim, const double* bre,
             const double* bim) {
  for (int r = 0; r < 16; ++r) mm_row_neon(r, cre, cim, are, aim, bre, bim, false);
}

void mm_acc_neon(double* cre, double* cim, const double* are, const double* aim,
                 const double* bre, const double* bim) {
  for (int r = 0; r < 16; ++r) mm_row_neon(r, cre, cim, are, aim, bre, bim, true);
}

void axpy_neon(double* yre, double* yim, double sre, double sim, const double* xre,
               const double* xim, std::size_t n) {
  const float64x2_t vsr = vdupq_n_f64(sre);
  const float64x2_t vsi = vdupq_n_f64(sim);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t xr = vld1q_f64(xre + i);
    const float64x2_t xi = vld1q_f64(xim + i);
    float64x2_t yr = vld1q_f64(yre + i);
    float64x2_t yi = vld1q_f64(yim + i);
    yr = vfmaq_f64(yr, vsr, xr);
    yr = vfmsq_f64(yr, vsi, xi);
    yi = vfmaq_f64(yi, vsr, xi);
    yi = vfmaq_f64(yi, vsi, xr);
    vst1q_f64(yre + i, yr);
    vst1q_f64(yim + i, yi);
  }
  for (; i < n; ++i) {
    const double xr = xre[i];
    const double xi = xim[i];
    yre[i] += sre * xr - sim * xi;
    yim[i] += sre * xi + sim * xr;
  }
}

}  // namespace

const Kernels neon_kernels{mm_neon, mm_acc_neon, axpy_neon, "neon"};
#endif  // __aarch64__

namespace {

const Kernels* detect_best() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &avx2_kernels;
#endif
#if defined(__aarch64__)
  return &neon_kernels;
#endif
  return &scalar_kernels;
}

const Kernels* g_active = nullptr;

}  // namespace

const Kernels& active() {
  if (!g_active) g_active = detect_best();
  return *g_active;
}

bool supported(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::AVX2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::NEON:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Kernels& get(Backend b) {
  if (!supported(b)) throw Error("requested SIMD backend not supported on this host");
  switch (b) {
    case Backend::Scalar:
      return scalar_kernels;
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::AVX2:
      return avx2_kernels;
#endif
#if defined(__aarch64__)
    case Backend::NEON:
      return neon_kernels;
#endif
    default:
      throw Error("requested SIMD backend not compiled in");
  }
}

void force(Backend b) { g_active = &get(b); }

void reset() { g_active = detect_best(); }

}  // namespace tflow::simd

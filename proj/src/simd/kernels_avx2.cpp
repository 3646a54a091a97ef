// AVX2+FMA kernels for the planar 16x16 complex matmul and axpy. This TU is
// compiled without global arch flags; the target attribute scopes AVX2 code
// generation to these functions so the binary still runs on plain SSE2 hosts
// (dispatch checks cpu support before installing these pointers).

#include <cstddef>

#include "tflow/superop.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace tflow::simd {
namespace {

// One output row at a time: 4 ymm accumulators for the real plane, 4 for the
// imaginary plane. Inner loop over k broadcasts A(r,k) and FMAs row k of B.
__attribute__((target("avx2,fma"))) inline void mm_row(int r, double* cre, double* cim,
                                                       const double* are, const double* aim,
                                                       const double* bre, const double* bim,
                                                       bool accumulate) {
  __m256d crr0, crr1, crr2, crr3, cir0, cir1, cir2, cir3;
  if (accumulate) {
    crr0 = _mm256_load_pd(cre + r * 16 + 0);
    crr1 = _mm256_load_pd(cre + r * 16 + 4);
    crr2 = _mm256_load_pd(cre + r * 16 + 8);
    crr3 = _mm256_load_pd(cre + r * 16 + 12);
    cir0 = _mm256_load_pd(cim + r * 16 + 0);
    cir1 = _mm256_load_pd(cim + r * 16 + 4);
    cir2 = _mm256_load_pd(cim + r * 16 + 8);
    cir3 = _mm256_load_pd(cim + r * 16 + 12);
  } else {
    crr0 = crr1 = crr2 = crr3 = _mm256_setzero_pd();
    cir0 = cir1 = cir2 = cir3 = _mm256_setzero_pd();
  }
  for (int k = 0; k < 16; ++k) {
    const __m256d ar = _mm256_broadcast_sd(are + r * 16 + k);
    const __m256d ai = _mm256_broadcast_sd(aim + r * 16 + k);
    const __m256d br0 = _mm256_load_pd(bre + k * 16 + 0);
    const __m256d br1 = _mm256_load_pd(bre + k * 16 + 4);
    const __m256d br2 = _mm256_load_pd(bre + k * 16 + 8);
    const __m256d br3 = _mm256_load_pd(bre + k * 16 + 12);
    const __m256d bi0 = _mm256_load_pd(bim + k * 16 + 0);
    const __m256d bi1 = _mm256_load_pd(bim + k * 16 + 4);
    const __m256d bi2 = _mm256_load_pd(bim + k * 16 + 8);
    const __m256d bi3 = _mm256_load_pd(bim + k * 16 + 12);
    // re += ar*br - ai*bi ; im += ar*bi + ai*br
    crr0 = _mm256_fmadd_pd(ar, br0, crr0);
    crr1 = _mm256_fmadd_pd(ar, br1, crr1);
    crr2 = _mm256_fmadd_pd(ar, br2, crr2);
    crr3 = _mm256_fmadd_pd(ar, br3, crr3);
    crr0 = _mm256_fnmadd_pd(ai, bi0, crr0);
    crr1 = _mm256_fnmadd_pd(ai, bi1, crr1);
    crr2 = _mm256_fnmadd_pd(ai, bi2, crr2);
    crr3 = _mm256_fnmadd_pd(ai, bi3, crr3);
    cir0 = _mm256_fmadd_pd(ar, bi0, cir0);
    cir1 = _mm256_fmadd_pd(ar, bi1, cir1);
    cir2 = _mm256_fmadd_pd(ar, bi2, cir2);
    cir3 = _mm256_fmadd_pd(ar, bi3, cir3);
    cir0 = _mm256_fmadd_pd(ai, br0, cir0);
    cir1 = _mm256_fmadd_pd(ai, br1, cir1);
    cir2 = _mm256_fmadd_pd(ai, br2, cir2);
    cir3 = _mm256_fmadd_pd(ai, br3, cir3);
  }
  _mm256_store_pd(cre + r * 16 + 0, crr0);
  _mm256_store_pd(cre + r * 16 + 4, crr1);
  _mm256_store_pd(cre + r * 16 + 8, crr2);
  _mm256_store_pd(cre + r * 16 + 12, crr3);
  _mm256_store_pd(cim + r * 16 + 0, cir0);
  _mm256_store_pd(cim + r * 16 + 4, cir1);
  _mm256_store_pd(cim + r * 16 + 8, cir2);
  _mm256_store_pd(cim + r * 16 + 12, cir3);
}

__attribute__((target("avx2,fma"))) void mm_avx2(double* cre, double* cim, const double* are,
                                                 const double* aim, const double* bre,
                                                 const double* bim) {
  for (int r = 0; r < 16; ++r) mm_row(r, cre, cim, are, aim, bre, bim, false);
}

__attribute__((target("avx2,fma"))) void mm_acc_avx2(double* cre, double* cim, const double* are,
                                                     const double* aim, const double* bre,
                                                     const double* bim) {
  for (int r = 0; r < 16; ++r) mm_row(r, cre, cim, are, aim, bre, bim, true);
}

__attribute__((target("avx2,fma"))) void axpy_avx2(double* yre, double* yim, double sre,
                                                   double sim, const double* xre,
                                                   const double* xim, std::size_t n) {
  const __m256d vsr = _mm256_set1_pd(sre);
  const __m256d vsi = _mm256_set1_pd(sim);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xr = _mm256_loadu_pd(xre + i);
    const __m256d xi = _mm256_loadu_pd(xim + i);
    __m256d yr = _mm256_loadu_pd(yre + i);
    __m256d yi = _mm256_loadu_pd(yim + i);
    yr = _mm256_fmadd_pd(vsr, xr, yr);
    yr = _mm256_fnmadd_pd(vsi, xi, yr);
    yi = _mm256_fmadd_pd(vsr, xi, yi);
    yi = _mm256_fmadd_pd(vsi, xr, yi);
    _mm256_storeu_pd(yre + i, yr);
    _mm256_storeu_pd(yim + i, yi);
  }
  for (; i < n; ++i) {
    const double xr = xre[i];
    const double xi = xim[i];
    yre[i] += sre * xr - sim * xi;
    yim[i] += sre * xi + sim * xr;
  }
}

}  // namespace

const Kernels avx2_kernels{mm_avx2, mm_acc_avx2, axpy_avx2, "avx2"};

}  // namespace tflow::simd

#endif  // x86_64

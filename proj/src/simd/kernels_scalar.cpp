#include <cstddef>

#include "tflow/superop.hpp"

namespace tflow::simd {
namespace {

// Reference kernels. Plain loops, no pragmas; the build keeps this TU free of
// arch flags so the equivalence test compares genuinely different code paths.
// Complex product in planar form: (ar+i ai)(br+i bi) = (ar br - ai bi) + i(ar bi + ai br).

void mm_scalar(double* cre, double* cim, const double* are, const double* aim,
               const double* bre, const double* bim) {
  for (int r = 0; r < 16; ++r) {
    double accre[16] = {0};
    double accim[16] = {0};
    for (int k = 0; k < 16; ++k) {
      const double ar = are[r * 16 + k];
      const double ai = aim[r * 16 + k];
      for (int c = 0; c < 16; ++c) {
        const double br = bre[k * 16 + c];
        const double bi = bim[k * 16 + c];
        accre[c] += ar * br - ai * bi;
        accim[c] += ar * bi + ai * br;
      }
    }
    for (int c = 0; c < 16; ++c) {
      cre[r * 16 + c] = accre[c];
      cim[r * 16 + c] = accim[c];
    }
  }
}

void mm_acc_scalar(double* cre, double* cim, const double* are, const double* aim,
                   const double* bre, const double* bim) {
  for (int r = 0; r < 16; ++r) {
    double accre[16] = {0};
    double accim[16] = {0};
    for (int k = 0; k < 16; ++k) {
      const double ar = are[r * 16 + k];
      const double ai = aim[r * 16 + k];
      for (int c = 0; c < 16; ++c) {
        const double br = bre[k * 16 + c];
        const double bi = bim[k * 16 + c];
        accre[c] += ar * br - ai * bi;
        accim[c] += ar * bi + ai * br;
      }
    }
    for (int c = 0; c < 16; ++c) {
      cre[r * 16 + c] += accre[c];
      cim[r * 16 + c] += accim[c];
    }
  }
}

void axpy_scalar(double* yre, double* yim, double sre, double sim, const double* xre,
                 const double* xim, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xr = xre[i];
    const double xi = xim[i];
    yre[i] += sre * xr - sim * xi;
    yim[i] += sre * xi + sim * xr;
  }
}

}  // namespace

const Kernels scalar_kernels{mm_scalar, mm_acc_scalar, axpy_scalar, "scalar"};

}  // namespace tflow::simd

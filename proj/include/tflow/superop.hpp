#pragma once
#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>

#include "tflow/errors.hpp"

namespace tflow {

inline constexpr int kDim = 4;    // impurity Fock space: |0>, |up>, |dn>, |updn>
inline constexpr int kSDim = 16;  // Liouville space dimension

using cplx = std::complex<double>;

// Dense 4x4 complex matrix acting on the Fock space. Small enough that naive
// loops are fine; only used to build operators, never in the hot path.
struct Mat4 {
  std::array<cplx, 16> a{};  // row-major, a[r*4+c]

  cplx& operator()(int r, int c) { return a[r * 4 + c]; }
  const cplx& operator()(int r, int c) const { return a[r * 4 + c]; }

  static Mat4 zero() { return Mat4{}; }
  static Mat4 identity();
  static Mat4 diag(double d0, double d1, double d2, double d3);

  Mat4 operator*(const Mat4& o) const;
  Mat4 operator+(const Mat4& o) const;
  Mat4 operator-(const Mat4& o) const;
  Mat4 operator*(cplx s) const;
  Mat4 adjoint() const;
  Mat4 transpose() const;
  cplx trace() const;
};

// 16x16 complex superoperator in split (planar) storage: separate real and
// imaginary planes, 64-byte aligned so the SIMD kernels can use aligned loads.
// Index convention: row-major, entry (r,c) at offset r*16+c. Liouville index
// i+4j encodes the matrix element X_{ij} of the vectorized operator
// (column-stacking convention).
struct alignas(64) SuperOp {
  double re[256];
  double im[256];

  SuperOp() { clear(); }

  void clear();
  static SuperOp zero() { return SuperOp(); }
  static SuperOp identity();

  cplx operator()(int r, int c) const { return {re[r * 16 + c], im[r * 16 + c]}; }
  void set(int r, int c, cplx v) {
    re[r * 16 + c] = v.real();
    im[r * 16 + c] = v.imag();
  }
  void add(int r, int c, cplx v) {
    re[r * 16 + c] += v.real();
    im[r * 16 + c] += v.imag();
  }

  SuperOp& operator+=(const SuperOp& o);
  SuperOp& operator-=(const SuperOp& o);
  SuperOp& operator*=(cplx s);
  SuperOp operator+(const SuperOp& o) const;
  SuperOp operator-(const SuperOp& o) const;
  SuperOp operator*(const SuperOp& o) const;  // dispatched matmul
  SuperOp operator*(cplx s) const;

  SuperOp adjoint() const;
  double max_abs() const;            // sup norm over entries
  double max_abs_diff(const SuperOp& o) const;

  // Left-multiplication superoperator X -> A X  (I (x) A in column stacking)
  static SuperOp left(const Mat4& A);
  // Right-multiplication superoperator X -> X B  (B^T (x) I)
  static SuperOp right(const Mat4& B);
};

// Vectorized operator (element of the 16-dim Liouville space), vec(X)[i+4j] = X_ij.
struct SVec {
  std::array<cplx, kSDim> v{};
  cplx& operator[](int i) { return v[i]; }
  const cplx& operator[](int i) const { return v[i]; }
};

// Row covector; the trace functional lives here.
struct SCovec {
  std::array<cplx, kSDim> v{};
  cplx& operator[](int i) { return v[i]; }
  const cplx& operator[](int i) const { return v[i]; }
};

SVec vec(const Mat4& X);
Mat4 devec(const SVec& x);
SVec apply(const SuperOp& S, const SVec& x);
SCovec apply(const SCovec& y, const SuperOp& S);  // row * matrix
cplx dot(const SCovec& y, const SVec& x);         // y . x, no conjugation

// Trace covector tau with tau . vec(X) = Tr X.
SCovec trace_covector();

// y := y + s*x over all 256 complex entries.
void axpy(SuperOp& y, cplx s, const SuperOp& x);
// out := A*B (dispatched), out must not alias A or B.
void matmul(SuperOp& out, const SuperOp& A, const SuperOp& B);
// out := out + A*B
void matmul_acc(SuperOp& out, const SuperOp& A, const SuperOp& B);

namespace simd {

// Runtime-dispatched dense kernels. All operate on planar 256-entry blocks.
struct Kernels {
  // C = A*B and C += A*B on planar 16x16 complex
  void (*mm)(double* cre, double* cim, const double* are, const double* aim,
             const double* bre, const double* bim);
  void (*mm_acc)(double* cre, double* cim, const double* are, const double* aim,
                 const double* bre, const double* bim);
  // y += s*x over n doubles-pairs (planar complex axpy)
  void (*axpy)(double* yre, double* yim, double sre, double sim, const double* xre,
               const double* xim, std::size_t n);
  const char* name;
};

enum class Backend { Scalar, AVX2, NEON };

// Best backend the host supports (cached after first call).
const Kernels& active();
// Force a specific backend (throws Error if unsupported on this host).
void force(Backend b);
// Reset to auto-detected best.
void reset();
// Query what is compiled in / supported at runtime.
bool supported(Backend b);
const Kernels& get(Backend b);

extern const Kernels scalar_kernels;
#if defined(__x86_64__) || defined(_M_X64)
extern const Kernels avx2_kernels;
#endif
#if defined(__aarch64__)
extern const Kernels neon_kernels;
#endif

}  // namespace simd
}  // namespace tflow

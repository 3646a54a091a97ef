#include "tflow/superop.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tflow {

Mat4 Mat4::identity() {
  Mat4 m;
  for (int i = 0; i < 4; ++i) m(i, i) = 1.0;
  return m;
}

Mat4 Mat4::diag(double d0, double d1, double d2, double d3) {
  Mat4 m;
  m(0, 0) = d0;
  m(1, 1) = d1;
  m(2, 2) = d2;
  m(3, 3) = d3;
  return m;
}

Mat4 Mat4::operator*(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const cplx a = (*this)(i, k);
      if (a == 0.0) continue;
      for (int j = 0; j < 4; ++j) r(i, j) += a * o(k, j);
    }
  return r;
}

Mat4 Mat4::operator+(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 16; ++i) r.a[i] = a[i] + o.a[i];
  return r;
}

Mat4 Mat4::operator-(const Mat4& o) const {
  Mat4 r;
  for (int i = 0; i < 16; ++i) r.a[i] = a[i] - o.a[i];
  return r;
}

Mat4 Mat4::operator*(cplx s) const {
  Mat4 r;
  for (int i = 0; i < 16; ++i) r.a[i] = a[i] * s;
  return r;
}

Mat4 Mat4::adjoint() const {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r(i, j) = std::conj((*this)(j, i));
  return r;
}

Mat4 Mat4::transpose() const {
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r(i, j) = (*this)(j, i);
  return r;
}

cplx Mat4::trace() const { return a[0] + a[5] + a[10] + a[15]; }

void SuperOp::clear() {
  std::memset(re, 0, sizeof(re));
  std::memset(im, 0, sizeof(im));
}

SuperOp SuperOp::identity() {
  SuperOp s;
  for (int i = 0; i < 16; ++i) s.re[i * 16 + i] = 1.0;
  return s;
}

SuperOp& SuperOp::operator+=(const SuperOp& o) {
  for (int i = 0; i < 256; ++i) {
    re[i] += o.re[i];
    im[i] += o.im[i];
  }
  return *this;
}

SuperOp& SuperOp::operator-=(const SuperOp& o) {
  for (int i = 0; i < 256; ++i) {
    re[i] -= o.re[i];
    im[i] -= o.im[i];
  }
  return *this;
}

SuperOp& SuperOp::operator*=(cplx s) {
  const double sr = s.real(), si = s.imag();
  for (int i = 0; i < 256; ++i) {
    const double r = re[i], m = im[i];
    re[i] = sr * r - si * m;
    im[i] = sr * m + si * r;
  }
  return *this;
}

SuperOp SuperOp::operator+(const SuperOp& o) const {
  SuperOp r = *this;
  r += o;
  return r;
}

SuperOp SuperOp::operator-(const SuperOp& o) const {
  SuperOp r = *this;
  r -= o;
  return r;
}

SuperOp SuperOp::operator*(const SuperOp& o) const {
  SuperOp r;
  matmul(r, *this, o);
  return r;
}

SuperOp SuperOp::operator*(cplx s) const {
  SuperOp r = *this;
  r *= s;
  return r;
}

SuperOp SuperOp::adjoint() const {
  SuperOp r;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      r.re[i * 16 + j] = re[j * 16 + i];
      r.im[i * 16 + j] = -im[j * 16 + i];
    }
  return r;
}

double SuperOp::max_abs() const {
  double m = 0.0;
  for (int i = 0; i < 256; ++i) m = std::max(m, std::hypot(re[i], im[i]));
  return m;
}

double SuperOp::max_abs_diff(const SuperOp& o) const {
  double m = 0.0;
  for (int i = 0; i < 256; ++i) m = std::max(m, std::hypot(re[i] - o.re[i], im[i] - o.im[i]));
  return m;
}

SuperOp SuperOp::left(const Mat4& A) {
  // vec(A X)[i+4j] = sum_k A_ik X_kj -> S[(i+4j),(k+4j)] = A_ik
  SuperOp s;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 4; ++k) s.set(i + 4 * j, k + 4 * j, A(i, k));
  return s;
}

SuperOp SuperOp::right(const Mat4& B) {
  // vec(X B)[i+4j] = sum_l X_il B_lj -> S[(i+4j),(i+4l)] = B_lj
  SuperOp s;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i)
      for (int l = 0; l < 4; ++l) s.set(i + 4 * j, i + 4 * l, B(l, j));
  return s;
}

SVec vec(const Mat4& X) {
  SVec x;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) x[i + 4 * j] = X(i, j);
  return x;
}

Mat4 devec(const SVec& x) {
  Mat4 X;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) X(i, j) = x[i + 4 * j];
  return X;
}

SVec apply(const SuperOp& S, const SVec& x) {
  SVec y;
  for (int r = 0; r < 16; ++r) {
    cplx acc = 0.0;
    for (int c = 0; c < 16; ++c) acc += S(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

SCovec apply(const SCovec& y, const SuperOp& S) {
  SCovec z;
  for (int c = 0; c < 16; ++c) {
    cplx acc = 0.0;
    for (int r = 0; r < 16; ++r) acc += y[r] * S(r, c);
    z[c] = acc;
  }
  return z;
}

cplx dot(const SCovec& y, const SVec& x) {
  cplx acc = 0.0;
  for (int i = 0; i < 16; ++i) acc += y[i] * x[i];
  return acc;
}

SCovec trace_covector() {
  SCovec t;
  for (int i = 0; i < 4; ++i) t[i + 4 * i] = 1.0;
  return t;
}

void axpy(SuperOp& y, cplx s, const SuperOp& x) {
  simd::active().axpy(y.re, y.im, s.real(), s.imag(), x.re, x.im, 256);
}

void matmul(SuperOp& out, const SuperOp& A, const SuperOp& B) {
  simd::active().mm(out.re, out.im, A.re, A.im, B.re, B.im);
}

void matmul_acc(SuperOp& out, const SuperOp& A, const SuperOp& B) {
  simd::active().mm_acc(out.re, out.im, A.re, A.im, B.re, B.im);
}

}  // namespace tflow

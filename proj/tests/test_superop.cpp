#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "tflow/superop.hpp"

using namespace tflow;

namespace {

std::mt19937_64 rng(0x5eed1234u);

cplx rand_c() {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  return {d(rng), d(rng)};
}

Mat4 rand_mat4() {
  Mat4 m;
  for (auto& x : m.a) x = rand_c();
  return m;
}

SuperOp rand_superop() {
  SuperOp s;
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) s.set(r, c, rand_c());
  return s;
}

SVec rand_svec() {
  SVec x;
  for (auto& v : x.v) v = rand_c();
  return x;
}

// Straightforward triple-loop reference multiply, no SIMD anywhere.
SuperOp ref_mul(const SuperOp& A, const SuperOp& B) {
  SuperOp C;
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) {
      cplx acc = 0.0;
      for (int k = 0; k < kSDim; ++k) acc += A(r, k) * B(k, c);
      C.set(r, c, acc);
    }
  return C;
}

}  // namespace

TEST_CASE("Mat4 arithmetic against hand results") {
  Mat4 a = rand_mat4(), b = rand_mat4();
  Mat4 c = a * b;
  for (int r = 0; r < kDim; ++r)
    for (int col = 0; col < kDim; ++col) {
      cplx acc = 0.0;
      for (int k = 0; k < kDim; ++k) acc += a(r, k) * b(k, col);
      CHECK(std::abs(c(r, col) - acc) < 1e-14);
    }

  Mat4 ad = a.adjoint();
  for (int r = 0; r < kDim; ++r)
    for (int col = 0; col < kDim; ++col) CHECK(ad(r, col) == std::conj(a(col, r)));

  Mat4 at = a.transpose();
  for (int r = 0; r < kDim; ++r)
    for (int col = 0; col < kDim; ++col) CHECK(at(r, col) == a(col, r));

  cplx tr = a.trace();
  CHECK(std::abs(tr - (a(0, 0) + a(1, 1) + a(2, 2) + a(3, 3))) < 1e-15);

  Mat4 d = Mat4::diag(1.0, 2.0, 3.0, 4.0);
  CHECK(d(2, 2) == cplx(3.0, 0.0));
  CHECK(d(0, 1) == cplx(0.0, 0.0));
  CHECK(Mat4::identity()(3, 3) == cplx(1.0, 0.0));
}

TEST_CASE("SuperOp default construction is zeroed") {
  SuperOp s;
  CHECK(s.max_abs() == 0.0);
  SuperOp t = SuperOp::zero();
  CHECK(t.max_abs_diff(s) == 0.0);
}

TEST_CASE("left and right multiplication superoperators") {
  Mat4 A = rand_mat4(), B = rand_mat4(), X = rand_mat4();
  const SuperOp LA = SuperOp::left(A);
  const SuperOp RB = SuperOp::right(B);

  // vec(A X) = L(A) vec(X)
  SVec lx = apply(LA, vec(X));
  Mat4 ax = A * X;
  for (int i = 0; i < kSDim; ++i) CHECK(std::abs(lx[i] - vec(ax)[i]) < 1e-13);

  // vec(X B) = R(B) vec(X)
  SVec rx = apply(RB, vec(X));
  Mat4 xb = X * B;
  for (int i = 0; i < kSDim; ++i) CHECK(std::abs(rx[i] - vec(xb)[i]) < 1e-13);

  // left and right factors commute
  SuperOp lr = LA * RB, rl = RB * LA;
  CHECK(lr.max_abs_diff(rl) < 1e-13);
}

TEST_CASE("vec/devec round trip and trace covector") {
  Mat4 X = rand_mat4();
  Mat4 back = devec(vec(X));
  for (int i = 0; i < 16; ++i) CHECK(X.a[i] == back.a[i]);

  const SCovec tau = trace_covector();
  CHECK(std::abs(dot(tau, vec(X)) - X.trace()) < 1e-14);

  // tau has 1 exactly on the diagonal slots i + 4i
  for (int i = 0; i < kDim; ++i) CHECK(tau[i + 4 * i] == cplx(1.0, 0.0));
}

TEST_CASE("covector application is row times matrix") {
  SuperOp S = rand_superop();
  SVec x = rand_svec();
  SCovec y = trace_covector();
  // (y S) x == y (S x)
  cplx a = dot(apply(y, S), x);
  cplx b = dot(y, apply(S, x));
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("SuperOp adjoint and algebra") {
  SuperOp A = rand_superop(), B = rand_superop();
  SuperOp Ad = A.adjoint();
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) CHECK(Ad(r, c) == std::conj(A(c, r)));

  SuperOp sum = A + B;
  SuperOp diff = sum - B;
  CHECK(diff.max_abs_diff(A) < 1e-13);

  SuperOp sc = A * cplx(0.0, 2.0);
  CHECK(std::abs(sc(3, 7) - A(3, 7) * cplx(0.0, 2.0)) < 1e-15);

  SuperOp acc = A;
  acc += B;
  acc -= A;
  CHECK(acc.max_abs_diff(B) < 1e-13);

  SuperOp scl = A;
  scl *= cplx(2.0, -1.0);
  CHECK(std::abs(scl(5, 5) - A(5, 5) * cplx(2.0, -1.0)) < 1e-15);
}

TEST_CASE("dispatched matmul agrees with reference") {
  SuperOp A = rand_superop(), B = rand_superop();
  SuperOp ref = ref_mul(A, B);

  SuperOp C = A * B;
  CHECK(C.max_abs_diff(ref) < 1e-12);

  SuperOp D;
  matmul(D, A, B);
  CHECK(D.max_abs_diff(ref) < 1e-12);

  SuperOp E = rand_superop();
  SuperOp expect = E + ref;
  matmul_acc(E, A, B);
  CHECK(E.max_abs_diff(expect) < 1e-12);
}

TEST_CASE("axpy accumulates with a complex scale") {
  SuperOp x = rand_superop(), y = rand_superop();
  SuperOp expect = y + x * cplx(0.3, -0.7);
  axpy(y, cplx(0.3, -0.7), x);
  CHECK(y.max_abs_diff(expect) < 1e-13);
}

TEST_CASE("every compiled backend multiplies identically") {
  SuperOp A = rand_superop(), B = rand_superop();
  SuperOp ref = ref_mul(A, B);

  for (simd::Backend b : {simd::Backend::Scalar, simd::Backend::AVX2, simd::Backend::NEON}) {
    if (!simd::supported(b)) continue;
    const simd::Kernels& k = simd::get(b);
    INFO("backend: ", k.name);

    SuperOp C;
    k.mm(C.re, C.im, A.re, A.im, B.re, B.im);
    CHECK(C.max_abs_diff(ref) < 1e-12);

    SuperOp D = rand_superop();
    SuperOp expect = D + ref;
    k.mm_acc(D.re, D.im, A.re, A.im, B.re, B.im);
    CHECK(D.max_abs_diff(expect) < 1e-12);

    SuperOp y = rand_superop();
    SuperOp yexp = y + A * cplx(-0.25, 0.5);
    k.axpy(y.re, y.im, -0.25, 0.5, A.re, A.im, 256);
    CHECK(y.max_abs_diff(yexp) < 1e-13);
  }
}

TEST_CASE("backend forcing round trip") {
  // scalar is always available
  simd::force(simd::Backend::Scalar);
  CHECK(std::string(simd::active().name) == "scalar");
  simd::reset();

#if defined(__x86_64__) || defined(_M_X64)
  // NEON can never be forced on x86
  CHECK_THROWS_AS(simd::force(simd::Backend::NEON), Error);
#endif
  simd::reset();
}

TEST_CASE("max_abs and max_abs_diff see every entry") {
  SuperOp s;
  s.set(15, 15, cplx(0.0, -3.5));
  CHECK(s.max_abs() == doctest::Approx(3.5));
  SuperOp t;
  t.set(0, 0, cplx(1.0, 0.0));
  CHECK(s.max_abs_diff(t) == doctest::Approx(3.5));
  CHECK(t.max_abs_diff(t) == 0.0);
}

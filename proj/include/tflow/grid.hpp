#pragma once
#include <functional>
#include <vector>

#include "tflow/superop.hpp"

namespace tflow {

// Uniform time grid t_k = k * dt on [0, t_max], n >= 2 points.
struct TimeGrid {
  double t_max = 10.0;
  int n = 256;

  double dt() const { return t_max / (n - 1); }
  double t(int k) const { return k * dt(); }
  bool operator==(const TimeGrid& o) const { return t_max == o.t_max && n == o.n; }
};

// Superoperator-valued function sampled on a TimeGrid.
struct GridFn1 {
  TimeGrid g;
  std::vector<SuperOp> v;

  GridFn1() = default;
  explicit GridFn1(TimeGrid grid) : g(grid), v(static_cast<size_t>(grid.n)) {}
  SuperOp& operator[](int k) { return v[static_cast<size_t>(k)]; }
  const SuperOp& operator[](int k) const { return v[static_cast<size_t>(k)]; }
  int n() const { return g.n; }
  double sup_norm() const;
  double sup_norm_diff(const GridFn1& o) const;
};

// 2D grid function F(x, y), both axes the same uniform grid (coarse vertex
// axes). Only the triangle x + y <= t_max is physically populated; entries
// outside stay zero.
struct GridFn2 {
  TimeGrid g;
  std::vector<SuperOp> v;

  GridFn2() = default;
  explicit GridFn2(TimeGrid grid) : g(grid), v(static_cast<size_t>(grid.n) * grid.n) {}
  SuperOp& at(int i, int j) { return v[static_cast<size_t>(i) * g.n + j]; }
  const SuperOp& at(int i, int j) const { return v[static_cast<size_t>(i) * g.n + j]; }
  double sup_norm() const;
  double sup_norm_diff(const GridFn2& o) const;
};

// 3D grid function F(x, y, z); populated tetrahedron x + y + z <= t_max.
struct GridFn3 {
  TimeGrid g;
  std::vector<SuperOp> v;

  GridFn3() = default;
  explicit GridFn3(TimeGrid grid)
      : g(grid), v(static_cast<size_t>(grid.n) * grid.n * grid.n) {}
  SuperOp& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * g.n + j) * g.n + k];
  }
  const SuperOp& at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * g.n + j) * g.n + k];
  }
  double sup_norm() const;
  double sup_norm_diff(const GridFn3& o) const;
};

// Trapezoid convolution (A * B)(t_k) = int_0^{t_k} A(t_k - s) B(s) ds.
GridFn1 convolve(const GridFn1& A, const GridFn1& B);

// int_0^t dt1 int_0^t1 dt2 A(t - t1) B(t1 - t2) C(t2), i.e. A * B * C.
GridFn1 ordered_double_integral(const GridFn1& A, const GridFn1& B, const GridFn1& C);

// Solve the Volterra equation Pi = Pi_inf - i Pi_inf * Sigma * Pi marching in
// time with the implicit trapezoid rule. The constant step matrix
// Id + (i dt^2/4) Sigma(0) is LU-factored once; throws SingularSolve if it is
// numerically singular. pi_inf must be a semigroup family pi_inf[k] =
// pi_inf[1]^k (an exponential, which is what the physics supplies); the
// history sum is rolled up through that property, and a non-semigroup input
// is rejected with GridMismatch.
GridFn1 solve_dyson(const GridFn1& pi_inf, const GridFn1& sigma);

// dPi = -i Pi * dSigma * Pi (temperature derivative of the Dyson form).
GridFn1 dpi_dtheta(const GridFn1& pi, const GridFn1& dsigma);

// Catmull-Rom cubic sample of a GridFn1 at arbitrary t (clamped into
// [0, t_max]; exact on the nodes). End cells use a parabolic ghost node, so
// polynomials through degree two are reproduced over the whole range.
SuperOp sample_cubic(const GridFn1& f, double t);
void sample_cubic_into(SuperOp& out, const GridFn1& f, double t);

// Bilinear sample of a GridFn2 at (x, y) inside the grid square.
SuperOp sample_bilinear(const GridFn2& f, double x, double y);
// Trilinear sample of a GridFn3.
SuperOp sample_trilinear(const GridFn3& f, double x, double y, double z);

// Upsample a coarse 2D function onto another (finer) square grid bilinearly.
GridFn2 upsample_bilinear(const GridFn2& coarse, TimeGrid fine);

// Scalar-refined quadrature of int_0^{m h} g(u) F(u) du where F is the linear
// interpolant of samples F_0..F_m and g is a scalar callable integrated per
// cell with 8-point Gauss-Legendre. Returns per-node complex coefficients
// c_j so the integral is sum_j c_j F_j. If singular == Hi (Lo), the returned
// coefficient of the last (first) node is forced to zero: the caller must
// guarantee F vanishes there (the suppressed edge of a reordered integral);
// the pole of g is then never multiplied by nonzero data.
enum class SingularEdge { None, Lo, Hi };
std::vector<cplx> weighted_cell_coeffs(const std::function<cplx(double)>& g, double h, int m,
                                       SingularEdge singular);

// 8-point Gauss-Legendre of a scalar on [a, b].
cplx gl8(const std::function<cplx(double)>& g, double a, double b);

}  // namespace tflow

#include "tflow/grid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tflow/errors.hpp"

namespace tflow {

namespace {

void check_same(const TimeGrid& a, const TimeGrid& b) {
  if (!(a == b)) throw GridMismatch("time grids differ");
}

constexpr double kGL8Node[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                0.7966664774136267,  0.9602898564975363};
constexpr double kGL8Weight[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                  0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                  0.2223810344533745, 0.1012285362903763};

// Last node whose sup norm exceeds 1e-16 of the function's max; summing past
// it only adds terms below double roundoff. Returns -1 for an all-zero input.
int support_end(const GridFn1& f) {
  double m = 0.0;
  for (const auto& s : f.v) m = std::max(m, s.max_abs());
  if (m == 0.0) return -1;
  const double floor = 1.0e-16 * m;
  for (int k = f.n() - 1; k >= 0; --k)
    if (f[k].max_abs() > floor) return k;
  return -1;
}

}  // namespace

double GridFn1::sup_norm() const {
  double m = 0.0;
  for (const auto& s : v) m = std::max(m, s.max_abs());
  return m;
}

double GridFn1::sup_norm_diff(const GridFn1& o) const {
  if (!(g == o.g)) throw GridMismatch("sup_norm_diff on mismatched grids");
  double m = 0.0;
  for (size_t k = 0; k < v.size(); ++k) m = std::max(m, v[k].max_abs_diff(o.v[k]));
  return m;
}

double GridFn2::sup_norm() const {
  double m = 0.0;
  for (const auto& s : v) m = std::max(m, s.max_abs());
  return m;
}

double GridFn2::sup_norm_diff(const GridFn2& o) const {
  if (!(g == o.g)) throw GridMismatch("sup_norm_diff on mismatched grids");
  double m = 0.0;
  for (size_t k = 0; k < v.size(); ++k) m = std::max(m, v[k].max_abs_diff(o.v[k]));
  return m;
}

double GridFn3::sup_norm() const {
  double m = 0.0;
  for (const auto& s : v) m = std::max(m, s.max_abs());
  return m;
}

double GridFn3::sup_norm_diff(const GridFn3& o) const {
  if (!(g == o.g)) throw GridMismatch("sup_norm_diff on mismatched grids");
  double m = 0.0;
  for (size_t k = 0; k < v.size(); ++k) m = std::max(m, v[k].max_abs_diff(o.v[k]));
  return m;
}

GridFn1 convolve(const GridFn1& A, const GridFn1& B) {
  check_same(A.g, B.g);
  const int n = A.n();
  const double dt = A.g.dt();
  // Skip products where either factor is numerically zero; for kernels with
  // short memory (high temperature on a fine grid) this collapses the cost
  // from O(n^2) to O(n * support).
  const int ja = support_end(A), jb = support_end(B);
  GridFn1 C(A.g);
  if (ja < 0 || jb < 0) return C;
  SuperOp tmp;
  for (int k = 1; k < n; ++k) {
    SuperOp acc;
    // trapezoid: 1/2 at j=0 and j=k, interior weight 1
    if (k <= ja) {
      matmul(tmp, A[k], B[0]);
      axpy(acc, 0.5, tmp);
    }
    if (k <= jb) {
      matmul(tmp, A[0], B[k]);
      axpy(acc, 0.5, tmp);
    }
    const int jlo = std::max(1, k - ja), jhi = std::min(k - 1, jb);
    for (int j = jlo; j <= jhi; ++j) matmul_acc(acc, A[k - j], B[j]);
    acc *= dt;
    C[k] = acc;
  }
  return C;
}

GridFn1 ordered_double_integral(const GridFn1& A, const GridFn1& B, const GridFn1& C) {
  return convolve(convolve(A, B), C);
}

GridFn1 solve_dyson(const GridFn1& pi_inf, const GridFn1& sigma) {
  check_same(pi_inf.g, sigma.g);
  const int n = pi_inf.n();
  const double dt = pi_inf.g.dt();

  // The history sum over Pi_inf is rolled up with the semigroup property
  // Pi_inf[k] = Pi_inf[1]^k, so the caller must pass a true exponential
  // family. Spot-check it instead of trusting the caller blindly.
  if (pi_inf[0].max_abs_diff(SuperOp::identity()) > 1.0e-12)
    throw GridMismatch("solve_dyson: pi_inf[0] is not the identity");
  const SuperOp& E1 = pi_inf[1];
  if (n > 2) {
    const SuperOp E2 = E1 * E1;
    if (E2.max_abs_diff(pi_inf[2]) > 1.0e-10 * (1.0 + pi_inf[2].max_abs()))
      throw GridMismatch("solve_dyson: pi_inf is not a semigroup family");
  }

  // Step matrix (Id + i dt^2/4 Sigma_0) from substituting the trapezoid form
  // of C = Sigma * Pi into Pi = Pi_inf - i Pi_inf * C at the new node.
  Eigen::MatrixXcd Astep = Eigen::MatrixXcd::Identity(kSDim, kSDim);
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c)
      Astep(r, c) += cplx(0.0, 0.25 * dt * dt) * sigma[0](r, c);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(Astep);
  if (!lu.isInvertible()) throw SingularSolve("Dyson step matrix is singular");

  const int js = support_end(sigma);

  GridFn1 pi(pi_inf.g);
  pi[0] = SuperOp::identity();
  std::vector<SuperOp> Cpart(static_cast<size_t>(n));  // C_k = (Sigma * Pi)(t_k)
  Cpart[0].clear();

  SuperOp tmp;
  SuperOp Mk;  // running M_k = sum_{m=1}^{k-1} Pi_inf_{k-m} C_m = E1 (M_{k-1} + C_{k-1})
  for (int k = 1; k < n; ++k) {
    if (k >= 2) {
      tmp = Mk;
      tmp += Cpart[k - 1];
      matmul(Mk, E1, tmp);
    }
    // S_k: known part of C_k (everything except the (dt/2) Sigma_0 Pi_k term)
    SuperOp Sk;
    if (k <= js) {
      matmul(tmp, sigma[k], pi[0]);
      axpy(Sk, 0.5 * dt, tmp);
    }
    for (int j = std::max(1, k - js); j < k; ++j) {
      matmul(tmp, sigma[k - j], pi[j]);
      axpy(Sk, dt, tmp);
    }
    // rhs = Pi_inf_k - i dt M_k - i dt/2 S_k
    SuperOp rhs = pi_inf[k];
    axpy(rhs, cplx(0.0, -dt), Mk);
    axpy(rhs, cplx(0.0, -0.5 * dt), Sk);
    Eigen::MatrixXcd R(kSDim, kSDim);
    for (int r = 0; r < kSDim; ++r)
      for (int c = 0; c < kSDim; ++c) R(r, c) = rhs(r, c);
    const Eigen::MatrixXcd X = lu.solve(R);
    for (int r = 0; r < kSDim; ++r)
      for (int c = 0; c < kSDim; ++c) pi[k].set(r, c, X(r, c));
    // complete C_k with the implicit piece
    matmul(tmp, sigma[0], pi[k]);
    Cpart[k] = Sk;
    axpy(Cpart[k], 0.5 * dt, tmp);
    // C currently holds the ds-integral; no extra dt factor here because S_k
    // and the closing term already carry it.
  }
  return pi;
}

GridFn1 dpi_dtheta(const GridFn1& pi, const GridFn1& dsigma) {
  GridFn1 inner = convolve(pi, dsigma);
  GridFn1 outer = convolve(inner, pi);
  for (auto& s : outer.v) s *= cplx(0.0, -1.0);
  return outer;
}

void sample_cubic_into(SuperOp& out, const GridFn1& f, double t) {
  const int n = f.n();
  const double dt = f.g.dt();
  double s = t / dt;
  s = std::clamp(s, 0.0, static_cast<double>(n - 1));
  int j = static_cast<int>(std::floor(s));
  j = std::clamp(j, 0, n - 2);
  const double u = s - j;
  if (u == 0.0) {
    out = f[j];
    return;
  }
  const double u2 = u * u, u3 = u2 * u;
  const double w[4] = {0.5 * (-u + 2.0 * u2 - u3), 0.5 * (2.0 - 5.0 * u2 + 3.0 * u3),
                       0.5 * (u + 4.0 * u2 - 3.0 * u3), 0.5 * (-u2 + u3)};
  out.clear();
  for (int q = 0; q < 4; ++q) {
    const int idx = j - 1 + q;
    if (idx >= 0 && idx < n) {
      axpy(out, w[q], f[idx]);
    } else if (n < 3) {
      axpy(out, w[q], f[std::clamp(idx, 0, n - 1)]);
    } else if (idx < 0) {
      // ghost node from the parabola through the first three samples; keeps
      // the end cells second-order in the tangent instead of flattening them
      axpy(out, 3.0 * w[q], f[0]);
      axpy(out, -3.0 * w[q], f[1]);
      axpy(out, w[q], f[2]);
    } else {
      axpy(out, 3.0 * w[q], f[n - 1]);
      axpy(out, -3.0 * w[q], f[n - 2]);
      axpy(out, w[q], f[n - 3]);
    }
  }
}

SuperOp sample_cubic(const GridFn1& f, double t) {
  SuperOp out;
  sample_cubic_into(out, f, t);
  return out;
}

SuperOp sample_bilinear(const GridFn2& f, double x, double y) {
  const int n = f.g.n;
  const double dt = f.g.dt();
  double sx = std::clamp(x / dt, 0.0, static_cast<double>(n - 1));
  double sy = std::clamp(y / dt, 0.0, static_cast<double>(n - 1));
  int i = std::clamp(static_cast<int>(std::floor(sx)), 0, n - 2);
  int j = std::clamp(static_cast<int>(std::floor(sy)), 0, n - 2);
  const double u = sx - i, w = sy - j;
  SuperOp out;
  axpy(out, (1 - u) * (1 - w), f.at(i, j));
  axpy(out, u * (1 - w), f.at(i + 1, j));
  axpy(out, (1 - u) * w, f.at(i, j + 1));
  axpy(out, u * w, f.at(i + 1, j + 1));
  return out;
}

SuperOp sample_trilinear(const GridFn3& f, double x, double y, double z) {
  const int n = f.g.n;
  const double dt = f.g.dt();
  double sx = std::clamp(x / dt, 0.0, static_cast<double>(n - 1));
  double sy = std::clamp(y / dt, 0.0, static_cast<double>(n - 1));
  double sz = std::clamp(z / dt, 0.0, static_cast<double>(n - 1));
  int i = std::clamp(static_cast<int>(std::floor(sx)), 0, n - 2);
  int j = std::clamp(static_cast<int>(std::floor(sy)), 0, n - 2);
  int k = std::clamp(static_cast<int>(std::floor(sz)), 0, n - 2);
  const double u = sx - i, w = sy - j, q = sz - k;
  SuperOp out;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < 2; ++dk) {
        const double c = (di ? u : 1 - u) * (dj ? w : 1 - w) * (dk ? q : 1 - q);
        if (c != 0.0) axpy(out, c, f.at(i + di, j + dj, k + dk));
      }
  return out;
}

GridFn2 upsample_bilinear(const GridFn2& coarse, TimeGrid fine) {
  GridFn2 out(fine);
  for (int i = 0; i < fine.n; ++i)
    for (int j = 0; j < fine.n; ++j)
      out.at(i, j) = sample_bilinear(coarse, fine.t(i), fine.t(j));
  return out;
}

cplx gl8(const std::function<cplx(double)>& g, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  cplx acc = 0.0;
  for (int q = 0; q < 8; ++q) acc += kGL8Weight[q] * g(mid + half * kGL8Node[q]);
  return acc * half;
}

std::vector<cplx> weighted_cell_coeffs(const std::function<cplx(double)>& g, double h, int m,
                                       SingularEdge singular) {
  std::vector<cplx> c(static_cast<size_t>(m) + 1, cplx(0.0));
  for (int j = 0; j < m; ++j) {
    const double a = j * h, b = a + h;
    // per-cell: integral of g * (1 - u/h) goes to node j, g * (u/h) to node j+1
    const cplx c0 = gl8([&](double t) { return g(t) * ((b - t) / h); }, a, b);
    const cplx c1 = gl8([&](double t) { return g(t) * ((t - a) / h); }, a, b);
    c[static_cast<size_t>(j)] += c0;
    c[static_cast<size_t>(j) + 1] += c1;
  }
  if (singular == SingularEdge::Lo) c[0] = 0.0;
  if (singular == SingularEdge::Hi) c[static_cast<size_t>(m)] = 0.0;
  return c;
}

}  // namespace tflow

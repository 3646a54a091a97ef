#include "tflow/algebra.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace tflow {

namespace {

// d+_up: |0> -> |up>, |dn> -> +|up dn> (d+_up d+_dn|0> ordering gives the sign)
// d+_dn: |0> -> |dn>, |up> -> -|up dn>
Mat4 creation(int sigma) {
  Mat4 m;
  if (sigma == 0) {
    m(1, 0) = 1.0;
    m(3, 2) = 1.0;
  } else {
    m(2, 0) = 1.0;
    m(3, 1) = -1.0;
  }
  return m;
}

}  // namespace

Mat4 op_d(int eta, int sigma) {
  Mat4 c = creation(sigma);
  return eta > 0 ? c : c.adjoint();
}

Mat4 op_n(int sigma) {
  return sigma == 0 ? Mat4::diag(0, 1, 0, 1) : Mat4::diag(0, 0, 1, 1);
}

Mat4 op_parity() { return Mat4::diag(1, -1, -1, 1); }

Mat4 op_hamiltonian(const ModelParams& p) {
  return Mat4::diag(0.0, p.epsilon, p.epsilon, 2.0 * p.epsilon + p.U);
}

SuperOp superfermion(int p, int eta, int sigma) {
  const Mat4 D = op_d(eta, sigma);
  const Mat4 P = op_parity();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  // G^p . = (1/sqrt2) [ d . + p (-1)^n . (-1)^n d ]
  SuperOp s = SuperOp::left(D);
  SuperOp srt = SuperOp::left(P) * SuperOp::right(P * D);
  axpy(s, static_cast<double>(p), srt);
  s *= inv_sqrt2;
  return s;
}

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    for (int pi = 0; pi < 2; ++pi)
      for (int i = 0; i < kNSO; ++i) {
        const auto so = so_unpack(i);
        t.G[pi][i] = superfermion(pi == 0 ? +1 : -1, so.eta, so.sigma);
      }
    return t;
  }();
  return table;
}

SuperOp liouvillian(const ModelParams& p) {
  const Mat4 H = op_hamiltonian(p);
  return SuperOp::left(H) - SuperOp::right(H);
}

SuperOp liouvillian_superfermion(const ModelParams& p) {
  // L = sum_{eta sigma} etabar (eps + U/2) G+_{etabar sigma} G-_{eta sigma}
  //   + (U/2) sum_{eta sigma} [ G+_{etabar sigma} G-_{eta sigma} G-_{etabar sigmabar} G-_{eta sigmabar}
  //                           + G+_{etabar sigmabar} G+_{eta sigmabar} G+_{etabar sigma} G-_{eta sigma} ]
  const auto& F = fields();
  SuperOp L;
  for (int i = 0; i < kNSO; ++i) {
    const auto so = so_unpack(i);
    const int ib = so_bar(i);
    const double etabar = -so.eta;
    SuperOp bile = F.plus(ib) * F.minus(i);
    axpy(L, etabar * (p.epsilon + 0.5 * p.U), bile);
    const int isf = so_spinflip(i);
    const int ibsf = so_bar(isf);
    SuperOp quart1 = bile * F.minus(ibsf) * F.minus(isf);
    SuperOp quart2 = F.plus(ibsf) * F.plus(isf) * F.plus(ib) * F.minus(i);
    axpy(L, 0.5 * p.U, quart1);
    axpy(L, 0.5 * p.U, quart2);
  }
  return L;
}

SuperOp sigma_infty(const ModelParams& p) {
  const auto& F = fields();
  SuperOp m;  // accumulates -i Sigma_inf
  for (int i = 0; i < kNSO; ++i) {
    const auto so = so_unpack(i);
    SuperOp gg = F.plus(i) * F.minus(so_bar(i));
    axpy(m, -0.5 * p.gamma_tot(so.sigma), gg);
  }
  m *= cplx(0.0, 1.0);  // Sigma = i * (-i Sigma)
  return m;
}

SuperOp sigma_infty_current(const ModelParams& p, int reservoir) {
  const auto& F = fields();
  const auto& r = p.reservoirs.at(static_cast<size_t>(reservoir));
  SuperOp m;  // -i Sigma_I_inf
  for (int i = 0; i < kNSO; ++i) {
    const auto so = so_unpack(i);
    const double g = so.sigma == 0 ? r.gamma_up : r.gamma_dn;
    SuperOp gg = F.minus(i) * F.minus(so_bar(i));
    axpy(m, -0.25 * so.eta * g, gg);
  }
  m *= cplx(0.0, 1.0);
  return m;
}

SuperOp l_infty(const ModelParams& p) { return liouvillian(p) + sigma_infty(p); }

SuperOp exp_minus_i(const SuperOp& A, double t) {
  Eigen::MatrixXcd M(kSDim, kSDim);
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) M(r, c) = cplx(0.0, -t) * A(r, c);
  const Eigen::MatrixXcd E = M.exp();
  SuperOp out;
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) out.set(r, c, E(r, c));
  return out;
}

SuperOp propagator_infty(const ModelParams& p, double t) { return exp_minus_i(l_infty(p), t); }

SuperOp spin_swap() {
  Mat4 S;
  S(0, 0) = 1.0;
  S(1, 2) = 1.0;
  S(2, 1) = 1.0;
  S(3, 3) = -1.0;
  return SuperOp::left(S) * SuperOp::right(S);
}

}  // namespace tflow

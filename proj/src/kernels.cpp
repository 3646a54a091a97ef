#include "tflow/kernels.hpp"

#include <cmath>

#include "tflow/errors.hpp"

namespace tflow {

namespace {

// Largest node index beyond which every contraction component is numerically
// zero on this grid; lets the two-loop sums skip dead volume at high T.
int support_cutoff(const ContractionEval& c, const TimeGrid& g) {
  double amax = 0.0;
  for (int so = 0; so < kNSO; ++so) {
    const auto u = so_unpack(so);
    amax = std::max(amax, std::abs(c.gamma(u.eta, u.sigma, g.dt())));
  }
  if (amax == 0.0) return 1;
  for (int k = 1; k < g.n; ++k) {
    double m = 0.0;
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      m = std::max(m, std::abs(c.gamma(u.eta, u.sigma, g.t(k))));
    }
    if (m < 1.0e-18 * amax) return k;
  }
  return g.n;
}

// Tables of field-with-propagator products reused across the two-loop sums.
struct ChainTables {
  // X[so][m] = G+_so Pi[m],  W[so][m] = Pi[m] G+_so,  V[a][b][m] = G+_a Pi[m] G+_b
  std::vector<std::array<SuperOp, kNSO>> X, W;
  std::vector<std::array<std::array<SuperOp, kNSO>, kNSO>> V;
  // Current variants: XI[so][m] = (eta/2) G-_so Pi[m]
  std::vector<std::array<SuperOp, kNSO>> XI;
};

ChainTables build_chain_tables(const GridFn1& pi, bool with_current) {
  const auto& F = fields();
  const int n = pi.n();
  ChainTables t;
  t.X.resize(static_cast<size_t>(n));
  t.W.resize(static_cast<size_t>(n));
  t.V.resize(static_cast<size_t>(n));
  if (with_current) t.XI.resize(static_cast<size_t>(n));
  for (int m = 0; m < n; ++m)
    for (int a = 0; a < kNSO; ++a) {
      matmul(t.X[m][a], F.plus(a), pi[m]);
      matmul(t.W[m][a], pi[m], F.plus(a));
      for (int b = 0; b < kNSO; ++b) matmul(t.V[m][a][b], t.X[m][a], F.plus(b));
      if (with_current) {
        const auto u = so_unpack(a);
        SuperOp gm = F.minus(a);
        gm *= 0.5 * u.eta;
        matmul(t.XI[m][a], gm, pi[m]);
      }
    }
  return t;
}

// F_sigma(0) pair bracket used at coincident-time corners: the finite part of
// sum_eta gamma_{eta sigma}(d) G+_{eta sigma} Pi(d) G+_{etabar sigma}.
SuperOp corner_bracket(const ContractionEval& c, int sigma, const SuperOp& M1) {
  const auto& F = fields();
  const SuperOp id = SuperOp::identity();
  const int sp = so_pack(+1, sigma), sm = so_pack(-1, sigma);
  const PairLimit pl = pair_bracket_limit(c.residue(sigma), c.finite0(+1, sigma),
                                          c.finite0(-1, sigma), F.plus(sp), F.plus(sm),
                                          F.plus(sm), F.plus(sp), id, M1);
  return pl.finite;
}

}  // namespace

GridFn1 propagator_infty_grid(const ModelParams& p, TimeGrid g) {
  const SuperOp L = l_infty(p);
  GridFn1 out(g);
  for (int k = 0; k < g.n; ++k) out[k] = exp_minus_i(L, g.t(k));
  return out;
}

PairLimit pair_bracket_limit(cplx residue, cplx finite_plus, cplx finite_minus,
                             const SuperOp& A_p, const SuperOp& B_p, const SuperOp& A_m,
                             const SuperOp& B_m, const SuperOp& M0, const SuperOp& M1) {
  PairLimit out;
  SuperOp t1, t2;
  // plus-branch chain A_p M B_p, minus-branch A_m M B_m
  matmul(t1, A_p, M0);
  matmul(t2, t1, B_p);
  axpy(out.pole, residue, t2);
  axpy(out.finite, finite_plus, t2);
  matmul(t1, A_p, M1);
  matmul(t2, t1, B_p);
  axpy(out.finite, residue, t2);
  matmul(t1, A_m, M0);
  matmul(t2, t1, B_m);
  axpy(out.pole, residue, t2);
  axpy(out.finite, finite_minus, t2);
  matmul(t1, A_m, M1);
  matmul(t2, t1, B_m);
  axpy(out.finite, residue, t2);
  return out;
}

SuperOp zero_time_kernel(const ModelParams& p) {
  // Sigma(0) = -i F(0) with F(0) the eta-paired zero-time bracket summed over
  // spin; the would-be pole cancels by anticommutation of the fields.
  const SuperOp M1 = l_infty(p) * cplx(0.0, -1.0);  // Pi'(0) = -i L_inf
  // Temperatures are irrelevant at t = 0; build a snapshot with zero weights.
  std::vector<double> T(p.reservoirs.size(), 1.0), b(p.reservoirs.size(), 0.0);
  const ContractionEval c(p, T, b);
  SuperOp F0;
  for (int sigma = 0; sigma < 2; ++sigma) F0 += corner_bracket(c, sigma, M1);
  F0 *= cplx(0.0, -1.0);
  return F0;
}

GridFn1 sigma_order1(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines) {
  const auto& F = fields();
  GridFn1 out(pi_lines.g);
  SuperOp t1, t2;
  for (int k = 1; k < out.n(); ++k) {
    const double t = out.g.t(k);
    SuperOp Fk;
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      const cplx gam = c.gamma(u.eta, u.sigma, t);
      if (gam == 0.0) continue;
      matmul(t1, F.plus(so), pi_lines[k]);
      matmul(t2, t1, F.plus(so_bar(so)));
      axpy(Fk, gam, t2);
    }
    Fk *= cplx(0.0, -1.0);  // Sigma = -i F
    out[k] = Fk;
  }
  // t = 0: the paired limit with the *dressed* line slope. For the dressed
  // propagator the slope at 0 is still -i L_inf (the kernel enters at second
  // order in t), so the bare-line value is exact here.
  SuperOp M1;
  {
    // derivative of the line at t = 0 from the grid data would be noisy;
    // Pi(0) = Id and Pi'(0) = -i L_inf exactly for both bare and full lines.
    M1 = l_infty(p) * cplx(0.0, -1.0);
  }
  SuperOp F0;
  for (int sigma = 0; sigma < 2; ++sigma) F0 += corner_bracket(c, sigma, M1);
  F0 *= cplx(0.0, -1.0);
  out[0] = F0;
  return out;
}

GridFn1 current_sigma_order1(const ModelParams& p, const ContractionEval& c,
                             const GridFn1& pi_lines, int r) {
  const auto& F = fields();
  GridFn1 out(pi_lines.g);
  SuperOp t1, t2;
  for (int k = 1; k < out.n(); ++k) {
    const double t = out.g.t(k);
    SuperOp Fk;
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      const cplx gam = c.gamma_res(u.eta, u.sigma, r, t);
      if (gam == 0.0) continue;
      SuperOp gm = F.minus(so);
      gm *= 0.5 * u.eta;
      matmul(t1, gm, pi_lines[k]);
      matmul(t2, t1, F.plus(so_bar(so)));
      axpy(Fk, gam, t2);
    }
    Fk *= cplx(0.0, -1.0);
    out[k] = Fk;
  }
  // t = 0: pole-subtracted limit (pole coefficient is trace-annihilated).
  const SuperOp id = SuperOp::identity();
  const SuperOp M1 = l_infty(p) * cplx(0.0, -1.0);
  SuperOp F0;
  for (int sigma = 0; sigma < 2; ++sigma) {
    const int sp = so_pack(+1, sigma), sm = so_pack(-1, sigma);
    SuperOp Ap = F.minus(sp);
    Ap *= 0.5;
    SuperOp Am = F.minus(sm);
    Am *= -0.5;
    const PairLimit pl = pair_bracket_limit(
        c.residue_res(sigma, r), c.finite0_res(+1, sigma, r), c.finite0_res(-1, sigma, r), Ap,
        F.plus(sm), Am, F.plus(sp), id, M1);
    F0 += pl.finite;
  }
  F0 *= cplx(0.0, -1.0);
  out[0] = F0;
  return out;
}

namespace {

// Shared two-loop evaluator. For the current kernel the leftmost vertex (the
// one at the outer time t) uses (eta/2) G- and a reservoir-restricted
// contraction; reservoir < 0 selects the plain memory kernel.
GridFn1 sigma_order2_impl(const ModelParams& p, const ContractionEval& c,
                          const GridFn1& pi_lines, int reservoir, const PTOptions& opt) {
  const auto& F = fields();
  const TimeGrid g = pi_lines.g;
  const int n = g.n;
  const double dt = g.dt();
  const bool cur = reservoir >= 0;
  const int kcut = support_cutoff(c, g);

  const ChainTables tab = build_chain_tables(pi_lines, cur);
  const SuperOp id = SuperOp::identity();
  const SuperOp M1 = l_infty(p) * cplx(0.0, -1.0);
  // Nested diagonal bracket: F_sigma(0) reused at every coincident inner pair.
  SuperOp diag_bracket[2];
  for (int sigma = 0; sigma < 2; ++sigma) diag_bracket[sigma] = corner_bracket(c, sigma, M1);

  auto gamma_left = [&](int eta, int sigma, double t) {
    return cur ? c.gamma_res(eta, sigma, reservoir, t) : c.gamma(eta, sigma, t);
  };
  const auto& Xleft = cur ? tab.XI : tab.X;

  GridFn1 out(g);
  SuperOp t1, t2, cell;
  for (int k = 1; k < n; ++k) {
    SuperOp acc;  // accumulates -i Sigma^{(2)}(t_k) without the overall signs

    // ---- crossed: -sum int_0^t dt1 int_0^t1 dt2 gam1(t-t2) gam2(t1)
    //      Gl_1 Pi(t-t1) G+_2 Pi(t1-t2) G+_1bar Pi(t2) G+_2bar
    for (int j1 = 1; j1 <= k && j1 <= kcut; ++j1) {
      const double w1 = (j1 == k ? 0.5 : 1.0) * dt;
      for (int j2 = std::max(0, k - kcut); j2 <= j1; ++j2) {
        const double w2 = (j2 == 0 || j2 == j1 ? 0.5 : 1.0) * dt;
        const double weight = w1 * w2;
        if (j1 == k && j2 == k) {
          // coincident corner: eta1-paired bracket, symmetric approach ray
          for (int sigma1 = 0; sigma1 < 2; ++sigma1)
            for (int so2 = 0; so2 < kNSO; ++so2) {
              const auto u2 = so_unpack(so2);
              const cplx g2 = c.gamma(u2.eta, u2.sigma, g.t(k));
              if (g2 == 0.0) continue;
              const int sp = so_pack(+1, sigma1), sm = so_pack(-1, sigma1);
              SuperOp Ap = cur ? F.minus(sp) * cplx(0.5) : F.plus(sp);
              SuperOp Am = cur ? F.minus(sm) * cplx(-0.5) : F.plus(sm);
              // M(d) = Pi(a) G+_2 Pi(b), symmetric ray M1 = -i(L G+_2 + G+_2 L)/2
              SuperOp Mc1 = l_infty(p) * F.plus(so2) + F.plus(so2) * l_infty(p);
              Mc1 *= cplx(0.0, -0.5);
              const cplx res =
                  cur ? c.residue_res(sigma1, reservoir) : c.residue(sigma1);
              const cplx f0p = cur ? c.finite0_res(+1, sigma1, reservoir)
                                   : c.finite0(+1, sigma1);
              const cplx f0m = cur ? c.finite0_res(-1, sigma1, reservoir)
                                   : c.finite0(-1, sigma1);
              const PairLimit pl = pair_bracket_limit(res, f0p, f0m, Ap, F.plus(sm), Am,
                                                      F.plus(sp), F.plus(so2), Mc1);
              // trailing Pi(t2) G+_2bar with t2 = t
              matmul(t1, pl.finite, tab.W[k][so_bar(so2)]);
              axpy(acc, -opt.crossed_sign * weight * g2, t1);
            }
          continue;
        }
        for (int so1 = 0; so1 < kNSO; ++so1) {
          const auto u1 = so_unpack(so1);
          const cplx g1 = gamma_left(u1.eta, u1.sigma, g.t(k - j2));
          if (g1 == 0.0) continue;
          for (int so2 = 0; so2 < kNSO; ++so2) {
            const auto u2 = so_unpack(so2);
            const cplx g2 = c.gamma(u2.eta, u2.sigma, g.t(j1));
            if (g2 == 0.0) continue;
            matmul(t1, Xleft[k - j1][so1], tab.V[j1 - j2][so2][so_bar(so1)]);
            matmul(cell, t1, tab.W[j2][so_bar(so2)]);
            axpy(acc, -opt.crossed_sign * weight * g1 * g2, cell);
          }
        }
      }
    }

    // ---- nested: +sum int int gam1(t) gam2(t1-t2)
    //      Gl_1 Pi(t-t1) G+_2 Pi(t1-t2) G+_2bar Pi(t2) G+_1bar
    if (k <= kcut) {
      for (int so1 = 0; so1 < kNSO; ++so1) {
        const auto u1 = so_unpack(so1);
        const cplx g1 = gamma_left(u1.eta, u1.sigma, g.t(k));
        if (g1 == 0.0) continue;
        for (int j1 = 1; j1 <= k; ++j1) {
          const double w1 = (j1 == k ? 0.5 : 1.0) * dt;
          for (int j2 = std::max(0, j1 - kcut); j2 <= j1; ++j2) {
            const double w2 = (j2 == 0 || j2 == j1 ? 0.5 : 1.0) * dt;
            const double weight = w1 * w2;
            if (j2 == j1) {
              // coincident inner pair: eta2-paired bracket
              for (int sigma2 = 0; sigma2 < 2; ++sigma2) {
                matmul(t1, Xleft[k - j1][so1], diag_bracket[sigma2]);
                matmul(cell, t1, tab.W[j1][so_bar(so1)]);
                axpy(acc, weight * g1, cell);
              }
              continue;
            }
            for (int so2 = 0; so2 < kNSO; ++so2) {
              const auto u2 = so_unpack(so2);
              const cplx g2 = c.gamma(u2.eta, u2.sigma, g.t(j1 - j2));
              if (g2 == 0.0) continue;
              matmul(t1, Xleft[k - j1][so1], tab.V[j1 - j2][so2][so_bar(so2)]);
              matmul(cell, t1, tab.W[j2][so_bar(so1)]);
              axpy(acc, weight * g1 * g2, cell);
            }
          }
        }
      }
    }

    acc *= cplx(0.0, 1.0);  // acc holds -i Sigma; multiply by i to get Sigma
    out[k] = acc;
  }
  return out;
}

}  // namespace

GridFn1 sigma_order2(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines,
                     const PTOptions& opt) {
  return sigma_order2_impl(p, c, pi_lines, -1, opt);
}

GridFn1 current_sigma_order2(const ModelParams& p, const ContractionEval& c,
                             const GridFn1& pi_lines, int r, const PTOptions& opt) {
  return sigma_order2_impl(p, c, pi_lines, r, opt);
}

GridFn1 pt_kernel(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines,
                  int order, const PTOptions& opt) {
  GridFn1 out = sigma_order1(p, c, pi_lines);
  if (order >= 2) {
    const GridFn1 o2 = sigma_order2(p, c, pi_lines, opt);
    for (int k = 0; k < out.n(); ++k) out[k] += o2[k];
  }
  return out;
}

GridFn1 current_pt_kernel(const ModelParams& p, const ContractionEval& c,
                          const GridFn1& pi_lines, int r, int order, const PTOptions& opt) {
  GridFn1 out = current_sigma_order1(p, c, pi_lines, r);
  if (order >= 2) {
    const GridFn1 o2 = current_sigma_order2(p, c, pi_lines, r, opt);
    for (int k = 0; k < out.n(); ++k) out[k] += o2[k];
  }
  return out;
}

}  // namespace tflow

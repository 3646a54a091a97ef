#include "tflow/vertices.hpp"

#include <algorithm>
#include <cmath>

#include "tflow/errors.hpp"

namespace tflow {

namespace {

double safe_rel(double diff, double ref, double floor) { return diff / (ref + floor); }

}  // namespace

void FlowState::scale(double a) {
  for (auto& s : sigma.v) s *= a;
  for (auto& g : sigma_I)
    for (auto& s : g.v) s *= a;
  for (auto& g : R1)
    for (auto& s : g.v) s *= a;
  for (auto& g : G12)
    for (auto& s : g.v) s *= a;
}

void FlowState::add_scaled(double a, const FlowState& x) {
  if (sigma.v.size() != x.sigma.v.size() || R1.size() != x.R1.size() ||
      G12.size() != x.G12.size() || sigma_I.size() != x.sigma_I.size())
    throw GridMismatch("flow state shapes differ");
  for (size_t k = 0; k < sigma.v.size(); ++k) axpy(sigma.v[k], a, x.sigma.v[k]);
  for (size_t r = 0; r < sigma_I.size(); ++r)
    for (size_t k = 0; k < sigma_I[r].v.size(); ++k)
      axpy(sigma_I[r].v[k], a, x.sigma_I[r].v[k]);
  for (size_t c = 0; c < R1.size(); ++c)
    for (size_t k = 0; k < R1[c].v.size(); ++k) axpy(R1[c].v[k], a, x.R1[c].v[k]);
  for (size_t c = 0; c < G12.size(); ++c)
    for (size_t k = 0; k < G12[c].v.size(); ++k) axpy(G12[c].v[k], a, x.G12[c].v[k]);
}

FlowState FlowState::zeros_like(const FlowState& proto) {
  FlowState z = proto;
  z.scale(0.0);
  return z;
}

double FlowState::rel_diff_norm(const FlowState& o, double floor) const {
  double m = safe_rel(sigma.sup_norm_diff(o.sigma), o.sigma.sup_norm(), floor);
  for (size_t r = 0; r < sigma_I.size(); ++r)
    m = std::max(m, safe_rel(sigma_I[r].sup_norm_diff(o.sigma_I[r]), o.sigma_I[r].sup_norm(),
                             floor));
  for (size_t c = 0; c < R1.size(); ++c)
    m = std::max(m, safe_rel(R1[c].sup_norm_diff(o.R1[c]), o.R1[c].sup_norm(), floor));
  for (size_t c = 0; c < G12.size(); ++c)
    m = std::max(m, safe_rel(G12[c].sup_norm_diff(o.G12[c]), o.G12[c].sup_norm(), floor));
  return m;
}

// ---------------------------------------------------------- spin expansion

namespace {

GridFn2 mirror2(const GridFn2& src) {
  static const SuperOp S = spin_swap();
  GridFn2 out(src.g);
  SuperOp tmp;
  for (size_t k = 0; k < src.v.size(); ++k) {
    matmul(tmp, S, src.v[k]);
    matmul(out.v[k], tmp, S);
  }
  return out;
}

GridFn3 mirror3(const GridFn3& src) {
  static const SuperOp S = spin_swap();
  GridFn3 out(src.g);
  SuperOp tmp;
  for (size_t k = 0; k < src.v.size(); ++k) {
    matmul(tmp, S, src.v[k]);
    matmul(out.v[k], tmp, S);
  }
  return out;
}

}  // namespace

ExpandedVertices expand_vertices(const FlowState& s) {
  ExpandedVertices e;
  if (!s.spin_reduced) {
    for (size_t c = 0; c < s.r1_components.size(); ++c)
      e.R1[static_cast<size_t>(s.r1_components[c])] = &s.R1[c];
    for (size_t c = 0; c < s.g12_pairs.size(); ++c)
      e.G12[static_cast<size_t>(s.g12_pairs[c].first * kNSO + s.g12_pairs[c].second)] =
          &s.G12[c];
    for (int q = 0; q < kNSO; ++q)
      if (!e.R1[static_cast<size_t>(q)]) throw Error("incomplete R1 component set");
    for (int q = 0; q < 16; ++q)
      if (!e.G12[static_cast<size_t>(q)]) throw Error("incomplete G12 pair set");
    return e;
  }
  // Reduced storage keeps spin-up externals; mirror the rest by spin-swap
  // conjugation (valid because reduction is only enabled for spin-symmetric
  // couplings).
  e.own2.reserve(2);
  e.own3.reserve(8);
  for (size_t c = 0; c < s.r1_components.size(); ++c) {
    const int so = s.r1_components[c];
    e.R1[static_cast<size_t>(so)] = &s.R1[c];
    e.own2.push_back(mirror2(s.R1[c]));
    e.R1[static_cast<size_t>(so_spinflip(so))] = &e.own2.back();
  }
  for (size_t c = 0; c < s.g12_pairs.size(); ++c) {
    const auto [i, j] = s.g12_pairs[c];
    e.G12[static_cast<size_t>(i * kNSO + j)] = &s.G12[c];
    e.own3.push_back(mirror3(s.G12[c]));
    e.G12[static_cast<size_t>(so_spinflip(i) * kNSO + so_spinflip(j))] = &e.own3.back();
  }
  for (int q = 0; q < kNSO; ++q)
    if (!e.R1[static_cast<size_t>(q)]) throw Error("incomplete R1 component set");
  for (int q = 0; q < 16; ++q)
    if (!e.G12[static_cast<size_t>(q)]) throw Error("incomplete G12 pair set");
  return e;
}

// ------------------------------------------------------------ shared tables

namespace {

// Scalar contraction samples on a uniform axis, one per field index.
struct GammaAxis {
  std::array<std::vector<cplx>, kNSO> g, dg;  // index [so][node]; node 0 unused for g
};

GammaAxis sample_gamma_axis(const ContractionEval& c, const TimeGrid& grid) {
  GammaAxis a;
  for (int so = 0; so < kNSO; ++so) {
    a.g[static_cast<size_t>(so)].assign(static_cast<size_t>(grid.n), cplx(0.0));
    a.dg[static_cast<size_t>(so)].assign(static_cast<size_t>(grid.n), cplx(0.0));
    const auto u = so_unpack(so);
    for (int k = 1; k < grid.n; ++k) {
      a.g[static_cast<size_t>(so)][static_cast<size_t>(k)] = c.gamma(u.eta, u.sigma, grid.t(k));
      a.dg[static_cast<size_t>(so)][static_cast<size_t>(k)] =
          c.dgamma(u.eta, u.sigma, grid.t(k));
    }
  }
  return a;
}

// Per-cell Gauss-Legendre moments of g(v_xi - tau') against the two linear
// hat functions, reused across outputs sharing the same retarded argument.
// c0/c1 tables: index [xi * (n-1) + cell]
struct RetardedCells {
  int n = 0;
  std::vector<cplx> c0, c1;
  std::pair<cplx, cplx> at(int xi, int cell) const {
    const size_t idx = static_cast<size_t>(xi) * (n - 1) + cell;
    return {c0[idx], c1[idx]};
  }
};

// Build GL cell moments for weight w(tau') = f(v_xi - tau'), tau' in cell
// [cell h, (cell+1) h], for all xi in [0, n) and cell < xi. f is gamma or
// dgamma for a fixed field index.
template <typename Fn>
RetardedCells build_retarded_cells(Fn&& f, const TimeGrid& grid) {
  RetardedCells rc;
  rc.n = grid.n;
  const int nc = grid.n - 1;
  rc.c0.assign(static_cast<size_t>(grid.n) * nc, cplx(0.0));
  rc.c1.assign(static_cast<size_t>(grid.n) * nc, cplx(0.0));
  const double h = grid.dt();
  for (int xi = 1; xi < grid.n; ++xi) {
    const double txi = grid.t(xi);
    for (int cell = 0; cell < xi; ++cell) {
      const double a = cell * h, b = a + h;
      const size_t idx = static_cast<size_t>(xi) * nc + cell;
      rc.c0[idx] = gl8([&](double tp) { return f(txi - tp) * ((b - tp) / h); }, a, b);
      rc.c1[idx] = gl8([&](double tp) { return f(txi - tp) * ((tp - a) / h); }, a, b);
    }
  }
  return rc;
}

// Assemble per-node coefficients for int_0^{v_m} w(v_xi - tau') F(tau') d tau'
// from cell moments; if drop_last, the coefficient of node m is zeroed (the
// singular-edge contract: F(v_m) must vanish there).
void assemble_coeffs(const RetardedCells& rc, int xi, int m, bool drop_last,
                     std::vector<cplx>& out) {
  out.assign(static_cast<size_t>(m) + 1, cplx(0.0));
  for (int cell = 0; cell < m; ++cell) {
    const auto [c0, c1] = rc.at(xi, cell);
    out[static_cast<size_t>(cell)] += c0;
    out[static_cast<size_t>(cell) + 1] += c1;
  }
  if (drop_last && m >= 1) out[static_cast<size_t>(m)] = 0.0;
}

// Trapezoid weight on [lo..hi] inclusive node range.
double trap_w(int j, int lo, int hi) { return (j == lo || j == hi) ? 0.5 : 1.0; }

// Cubic samples of a fine-grid function onto a coarse axis.
std::vector<SuperOp> sample_axis(const GridFn1& f, const TimeGrid& axis) {
  std::vector<SuperOp> out(static_cast<size_t>(axis.n));
  for (int i = 0; i < axis.n; ++i) sample_cubic_into(out[i], f, axis.t(i));
  return out;
}

// G+_a Pi(v_i) and Pi(v_i) G+_a style tables on a coarse axis.
struct AxisTables {
  // P[a][b][i] = G+_a Pi_i G+_b ; XR[a][i] = Pi_i G+_a ; XL[a][i] = G+_a Pi_i
  std::vector<SuperOp> P, XR, XL;
  int n = 0;
  const SuperOp& p(int a, int b, int i) const {
    return P[(static_cast<size_t>(a) * kNSO + b) * n + i];
  }
  const SuperOp& xr(int a, int i) const { return XR[static_cast<size_t>(a) * n + i]; }
  const SuperOp& xl(int a, int i) const { return XL[static_cast<size_t>(a) * n + i]; }
};

AxisTables build_axis_tables(const std::vector<SuperOp>& pi_axis) {
  const auto& F = fields();
  AxisTables t;
  t.n = static_cast<int>(pi_axis.size());
  t.P.resize(static_cast<size_t>(kNSO) * kNSO * t.n);
  t.XR.resize(static_cast<size_t>(kNSO) * t.n);
  t.XL.resize(static_cast<size_t>(kNSO) * t.n);
  for (int i = 0; i < t.n; ++i)
    for (int a = 0; a < kNSO; ++a) {
      matmul(t.XL[static_cast<size_t>(a) * t.n + i], F.plus(a), pi_axis[static_cast<size_t>(i)]);
      matmul(t.XR[static_cast<size_t>(a) * t.n + i], pi_axis[static_cast<size_t>(i)], F.plus(a));
      for (int b = 0; b < kNSO; ++b)
        matmul(t.P[(static_cast<size_t>(a) * kNSO + b) * t.n + i],
               t.XL[static_cast<size_t>(a) * t.n + i], F.plus(b));
    }
  return t;
}

// Symmetric-ray slope of a propagator chain at the coincident corner:
// M(d) = Pi(d x1) A Pi(d x2) ... with sum x_i = 1 gives
// M'(0) = -i sum over insertion slots of L_inf weighted by x_i.
SuperOp corner_slope_1(const SuperOp& L, const SuperOp& A) {
  // M = Pi(d/2) A Pi(d/2): M1 = -i (L A + A L)/2
  SuperOp m = L * A + A * L;
  m *= cplx(0.0, -0.5);
  return m;
}

SuperOp corner_slope_2(const SuperOp& L, const SuperOp& A, const SuperOp& B) {
  // M = Pi(d/3) A Pi(d/3) B Pi(d/3): M1 = -i (L A B + A L B + A B L)/3
  SuperOp AB = A * B;
  SuperOp m = L * AB + A * (L * B) + AB * L;
  m *= cplx(0.0, -1.0 / 3.0);
  return m;
}

// eta-paired one-loop vertex corner: finite part of
// sum_2 gamma_2(d) G+_2 [Pi G+_1 Pi](d) G+_2bar at d -> 0.
SuperOp r1_corner(const ModelParams& p, const ContractionEval& c, int so1) {
  const auto& F = fields();
  const SuperOp L = l_infty(p);
  const SuperOp M0 = F.plus(so1);
  const SuperOp M1 = corner_slope_1(L, M0);
  SuperOp out;
  for (int sigma2 = 0; sigma2 < 2; ++sigma2) {
    const int sp = so_pack(+1, sigma2), sm = so_pack(-1, sigma2);
    const PairLimit pl =
        pair_bracket_limit(c.residue(sigma2), c.finite0(+1, sigma2), c.finite0(-1, sigma2),
                           F.plus(sp), F.plus(sm), F.plus(sm), F.plus(sp), M0, M1);
    out += pl.finite;
  }
  return out;
}

// Two-loop vertex corner (with the leading minus sign of that diagram).
SuperOp g12_corner(const ModelParams& p, const ContractionEval& c, int soi, int soj) {
  const auto& F = fields();
  const SuperOp L = l_infty(p);
  SuperOp M0 = F.plus(soi) * F.plus(soj);
  const SuperOp M1 = corner_slope_2(L, F.plus(soi), F.plus(soj));
  SuperOp out;
  for (int sigma3 = 0; sigma3 < 2; ++sigma3) {
    const int sp = so_pack(+1, sigma3), sm = so_pack(-1, sigma3);
    const PairLimit pl =
        pair_bracket_limit(c.residue(sigma3), c.finite0(+1, sigma3), c.finite0(-1, sigma3),
                           F.plus(sp), F.plus(sm), F.plus(sm), F.plus(sp), M0, M1);
    out += pl.finite;
  }
  out *= -1.0;
  return out;
}

std::vector<int> default_r1_components(bool reduced) {
  if (reduced) return {so_pack(+1, 0), so_pack(-1, 0)};
  return {0, 1, 2, 3};
}

std::vector<std::pair<int, int>> default_g12_pairs(bool reduced) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < kNSO; ++i) {
    if (reduced && so_unpack(i).sigma != 0) continue;
    for (int j = 0; j < kNSO; ++j) out.emplace_back(i, j);
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------- init

FlowState init_state(const ModelParams& p, const TemperaturePath& path, TimeGrid fine,
                     const VertexGrids& vg, const PTOptions& opt) {
  const double theta0 = path.theta_start();
  const ContractionEval c(p, path.temps(theta0), path.weights(theta0));
  const auto& F = fields();

  FlowState s;
  s.theta = theta0;
  s.spin_reduced = p.spin_symmetric();
  s.r1_components = default_r1_components(s.spin_reduced);
  s.g12_pairs = default_g12_pairs(s.spin_reduced);

  const GridFn1 pi_inf = propagator_infty_grid(p, fine);
  s.sigma = pt_kernel(p, c, pi_inf, 2, opt);
  const int nres = static_cast<int>(p.reservoirs.size());
  for (int r = 0; r < nres; ++r)
    s.sigma_I.push_back(current_pt_kernel(p, c, pi_inf, r, 2, opt));

  // Dressed propagator at the hot end; vertex corrections ride on it.
  const GridFn1 pi = solve_dyson(pi_inf, s.sigma);

  // One-loop regular part on the v axes.
  {
    const auto pi_v = sample_axis(pi, vg.v);
    const AxisTables T = build_axis_tables(pi_v);
    const GammaAxis ga = sample_gamma_axis(c, vg.v);
    for (int comp = 0; comp < static_cast<int>(s.r1_components.size()); ++comp) {
      const int so1 = s.r1_components[static_cast<size_t>(comp)];
      GridFn2 R(vg.v);
      SuperOp cell;
      for (int i = 0; i < vg.v.n; ++i)
        for (int j = 0; i + j < vg.v.n; ++j) {
          const int xi = i + j;
          if (xi == 0) {
            R.at(i, j) = r1_corner(p, c, so1);
            continue;
          }
          SuperOp acc;
          for (int so2 = 0; so2 < kNSO; ++so2) {
            const cplx g2 = ga.g[static_cast<size_t>(so2)][static_cast<size_t>(xi)];
            if (g2 == 0.0) continue;
            matmul(cell, T.p(so2, so1, i), T.xr(so_bar(so2), j));
            axpy(acc, g2, cell);
          }
          R.at(i, j) = acc;
        }
      s.R1.push_back(std::move(R));
    }
  }

  // Two-loop vertex on the w axes.
  {
    const auto pi_w = sample_axis(pi, vg.w);
    const AxisTables T = build_axis_tables(pi_w);
    const GammaAxis ga = sample_gamma_axis(c, vg.w);
    SuperOp chain, cell;
    for (const auto& [si, sj] : s.g12_pairs) {
      GridFn3 G(vg.w);
      for (int i = 0; i < vg.w.n; ++i)
        for (int j = 0; i + j < vg.w.n; ++j)
          for (int k = 0; i + j + k < vg.w.n; ++k) {
            const int xi = i + j + k;
            if (xi == 0) {
              G.at(i, j, k) = g12_corner(p, c, si, sj);
              continue;
            }
            SuperOp acc;
            for (int so3 = 0; so3 < kNSO; ++so3) {
              const cplx g3 = ga.g[static_cast<size_t>(so3)][static_cast<size_t>(xi)];
              if (g3 == 0.0) continue;
              // G+_3 Pi(x) G+_i Pi(y) G+_j Pi(z) G+_3bar
              matmul(chain, T.p(so3, si, i), T.xr(sj, j));
              matmul(cell, chain, T.xr(so_bar(so3), k));
              axpy(acc, -g3, cell);
            }
            G.at(i, j, k) = acc;
          }
      s.G12.push_back(std::move(G));
    }
  }
  return s;
}

// -------------------------------------------------------------------- rhs

namespace {

// Triangular scratch for the kernel-flow inner integrals at one outer node.
struct HRow {
  std::array<std::vector<SuperOp>, kNSO> A, B, C;  // index [a][j]
};

}  // namespace

RhsResult flow_rhs(const ModelParams& p, const TemperaturePath& path, const FlowState& phi,
                   const FlowState& dphi_guess) {
  const auto& F = fields();
  const ContractionEval c(p, path.temps(phi.theta), path.weights(phi.theta));
  const TimeGrid fine = phi.sigma.g;
  const int n = fine.n;
  const int nres = static_cast<int>(p.reservoirs.size());
  const TimeGrid vgrid = phi.R1.empty() ? TimeGrid{fine.t_max, 2} : phi.R1.front().g;
  const TimeGrid wgrid = phi.G12.empty() ? TimeGrid{fine.t_max, 2} : phi.G12.front().g;
  const int nv = vgrid.n, nw = wgrid.n;

  const GridFn1 pi_inf = propagator_infty_grid(p, fine);
  const GridFn1 pi = solve_dyson(pi_inf, phi.sigma);
  const GridFn1 dpi = dpi_dtheta(pi, dphi_guess.sigma);

  const ExpandedVertices R = expand_vertices(phi);
  const ExpandedVertices dR = expand_vertices(dphi_guess);

  RhsResult out;
  out.deriv = FlowState::zeros_like(phi);
  out.deriv.theta = 0.0;

  // ---------- kernel flow: bare pieces on the fine grid ----------
  {
    SuperOp t1;
    std::vector<SuperOp> sandG(static_cast<size_t>(kNSO)), sandD(static_cast<size_t>(kNSO));
    std::vector<SuperOp> sandGI(static_cast<size_t>(kNSO)), sandDI(static_cast<size_t>(kNSO));
    for (int k = 1; k < n; ++k) {
      const double t = fine.t(k);
      for (int so = 0; so < kNSO; ++so) {
        matmul(t1, F.plus(so), pi[k]);
        matmul(sandG[static_cast<size_t>(so)], t1, F.plus(so_bar(so)));
        matmul(t1, F.plus(so), dpi[k]);
        matmul(sandD[static_cast<size_t>(so)], t1, F.plus(so_bar(so)));
        const auto u = so_unpack(so);
        SuperOp gm = F.minus(so);
        gm *= 0.5 * u.eta;
        matmul(t1, gm, pi[k]);
        matmul(sandGI[static_cast<size_t>(so)], t1, F.plus(so_bar(so)));
        matmul(t1, gm, dpi[k]);
        matmul(sandDI[static_cast<size_t>(so)], t1, F.plus(so_bar(so)));
      }
      SuperOp acc;
      for (int so = 0; so < kNSO; ++so) {
        const auto u = so_unpack(so);
        axpy(acc, -c.dgamma(u.eta, u.sigma, t), sandG[static_cast<size_t>(so)]);
        axpy(acc, -c.gamma(u.eta, u.sigma, t), sandD[static_cast<size_t>(so)]);
      }
      out.deriv.sigma[k] = acc;
      for (int r = 0; r < nres; ++r) {
        SuperOp accI;
        for (int so = 0; so < kNSO; ++so) {
          const auto u = so_unpack(so);
          axpy(accI, -c.dgamma_res(u.eta, u.sigma, r, t), sandGI[static_cast<size_t>(so)]);
          axpy(accI, -c.gamma_res(u.eta, u.sigma, r, t), sandDI[static_cast<size_t>(so)]);
        }
        out.deriv.sigma_I[static_cast<size_t>(r)][k] = accI;
      }
    }
  }

  // ---------- kernel flow: vertex-correction pieces on the v axis ----------
  const auto pi_v = sample_axis(pi, vgrid);
  const auto dpi_v = sample_axis(dpi, vgrid);
  {
    // Retarded gamma cell moments per field index (weight gamma(v_k - tau)).
    std::array<RetardedCells, kNSO> cgam, cdgam;
    std::array<std::vector<RetardedCells>, kNSO> cgam_res, cdgam_res;
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      cgam[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.gamma(u.eta, u.sigma, t); }, vgrid);
      cdgam[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.dgamma(u.eta, u.sigma, t); }, vgrid);
      for (int r = 0; r < nres; ++r) {
        cgam_res[static_cast<size_t>(so)].push_back(build_retarded_cells(
            [&](double t) { return c.gamma_res(u.eta, u.sigma, r, t); }, vgrid));
        cdgam_res[static_cast<size_t>(so)].push_back(build_retarded_cells(
            [&](double t) { return c.dgamma_res(u.eta, u.sigma, r, t); }, vgrid));
      }
    }

    GridFn1 treg(TimeGrid{vgrid.t_max, nv});
    std::vector<GridFn1> treg_I(static_cast<size_t>(nres), GridFn1(TimeGrid{vgrid.t_max, nv}));

    HRow H;
    for (int a = 0; a < kNSO; ++a) {
      H.A[static_cast<size_t>(a)].resize(static_cast<size_t>(nv));
      H.B[static_cast<size_t>(a)].resize(static_cast<size_t>(nv));
      H.C[static_cast<size_t>(a)].resize(static_cast<size_t>(nv));
    }
    std::vector<cplx> coA, coB, coC;
    SuperOp tmp;
    for (int kc = 1; kc < nv; ++kc) {
      const double dtv = vgrid.dt();
      // inner integrals H(t2 = v_j) = int_{v_j}^{v_kc} dt1 line(v_kc - t1) R(t1 - v_j, v_j)
      for (int a = 0; a < kNSO; ++a) {
        for (int j = 0; j <= kc; ++j) {
          SuperOp accA, accB, accC;
          // j == kc is the empty range: keep exact zeros.
          for (int m = j; j < kc && m <= kc; ++m) {
            const double w = trap_w(m, j, kc) * dtv;
            matmul(tmp, pi_v[static_cast<size_t>(kc - m)], R.R1[static_cast<size_t>(a)]->at(m - j, j));
            axpy(accA, w, tmp);
            matmul(tmp, dpi_v[static_cast<size_t>(kc - m)], R.R1[static_cast<size_t>(a)]->at(m - j, j));
            axpy(accB, w, tmp);
            matmul(tmp, pi_v[static_cast<size_t>(kc - m)], dR.R1[static_cast<size_t>(a)]->at(m - j, j));
            axpy(accC, w, tmp);
          }
          H.A[static_cast<size_t>(a)][static_cast<size_t>(j)] = accA;
          H.B[static_cast<size_t>(a)][static_cast<size_t>(j)] = accB;
          H.C[static_cast<size_t>(a)][static_cast<size_t>(j)] = accC;
        }
      }
      // outer weighted sums per leftmost field index
      SuperOp accT;
      std::vector<SuperOp> accTI(static_cast<size_t>(nres));
      for (int so1 = 0; so1 < kNSO; ++so1) {
        const int ab = so_bar(so1);
        assemble_coeffs(cdgam[static_cast<size_t>(so1)], kc, kc, false, coA);
        assemble_coeffs(cgam[static_cast<size_t>(so1)], kc, kc, true, coB);
        SuperOp inner;
        for (int j = 0; j <= kc; ++j) {
          if (coA[static_cast<size_t>(j)] != 0.0)
            axpy(inner, coA[static_cast<size_t>(j)], H.A[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
          if (coB[static_cast<size_t>(j)] != 0.0) {
            axpy(inner, coB[static_cast<size_t>(j)], H.B[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
            axpy(inner, coB[static_cast<size_t>(j)], H.C[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
          }
        }
        matmul(tmp, F.plus(so1), inner);
        axpy(accT, -1.0, tmp);
        for (int r = 0; r < nres; ++r) {
          assemble_coeffs(cdgam_res[static_cast<size_t>(so1)][static_cast<size_t>(r)], kc, kc,
                          false, coA);
          assemble_coeffs(cgam_res[static_cast<size_t>(so1)][static_cast<size_t>(r)], kc, kc,
                          true, coB);
          SuperOp innerI;
          for (int j = 0; j <= kc; ++j) {
            if (coA[static_cast<size_t>(j)] != 0.0)
              axpy(innerI, coA[static_cast<size_t>(j)],
                   H.A[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
            if (coB[static_cast<size_t>(j)] != 0.0) {
              axpy(innerI, coB[static_cast<size_t>(j)],
                   H.B[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
              axpy(innerI, coB[static_cast<size_t>(j)],
                   H.C[static_cast<size_t>(ab)][static_cast<size_t>(j)]);
            }
          }
          const auto u = so_unpack(so1);
          SuperOp gm = F.minus(so1);
          gm *= 0.5 * u.eta;
          matmul(tmp, gm, innerI);
          axpy(accTI[static_cast<size_t>(r)], -1.0, tmp);
        }
      }
      treg[kc] = accT;
      for (int r = 0; r < nres; ++r) treg_I[static_cast<size_t>(r)][kc] = accTI[static_cast<size_t>(r)];
    }

    // upsample onto the fine grid and add
    SuperOp up;
    for (int k = 1; k < n; ++k) {
      sample_cubic_into(up, treg, fine.t(k));
      out.deriv.sigma[k] += up;
      for (int r = 0; r < nres; ++r) {
        sample_cubic_into(up, treg_I[static_cast<size_t>(r)], fine.t(k));
        out.deriv.sigma_I[static_cast<size_t>(r)][k] += up;
      }
    }
  }

  // d Sigma = i * (cut terms)
  for (int k = 0; k < n; ++k) out.deriv.sigma[k] *= cplx(0.0, 1.0);
  for (int r = 0; r < nres; ++r)
    for (int k = 0; k < n; ++k) out.deriv.sigma_I[static_cast<size_t>(r)][k] *= cplx(0.0, 1.0);
  out.dsigma_norm = out.deriv.sigma.sup_norm();

  // ---------- one-loop vertex flow ----------
  {
    const AxisTables T = build_axis_tables(pi_v);
    const AxisTables Td = build_axis_tables(dpi_v);
    const GammaAxis gav = sample_gamma_axis(c, vgrid);
    const double dtv = vgrid.dt();

    // gamma cell moments on the v axis (for the right-regular assembly)
    std::array<RetardedCells, kNSO> cgam, cdgam;
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      cgam[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.gamma(u.eta, u.sigma, t); }, vgrid);
      cdgam[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.dgamma(u.eta, u.sigma, t); }, vgrid);
    }

    // E tables: E[a](q, j) = int_{v_q}^{v_j} dc Pi(v_j - c) R_a(c - v_q, v_q),
    // and the slashed variant with dR. Stored flat [a][q * nv + j].
    std::vector<std::vector<SuperOp>> ER(kNSO), EdR(kNSO);
    {
      SuperOp tmp;
      for (int a = 0; a < kNSO; ++a) {
        ER[static_cast<size_t>(a)].assign(static_cast<size_t>(nv) * nv, SuperOp());
        EdR[static_cast<size_t>(a)].assign(static_cast<size_t>(nv) * nv, SuperOp());
        for (int q = 0; q < nv; ++q)
          for (int j = q + 1; j < nv; ++j) {
            SuperOp accR, accD;
            for (int m = q; m <= j; ++m) {
              const double w = trap_w(m, q, j) * dtv;
              matmul(tmp, pi_v[static_cast<size_t>(j - m)], R.R1[static_cast<size_t>(a)]->at(m - q, q));
              axpy(accR, w, tmp);
              matmul(tmp, pi_v[static_cast<size_t>(j - m)], dR.R1[static_cast<size_t>(a)]->at(m - q, q));
              axpy(accD, w, tmp);
            }
            ER[static_cast<size_t>(a)][static_cast<size_t>(q) * nv + j] = accR;
            EdR[static_cast<size_t>(a)][static_cast<size_t>(q) * nv + j] = accD;
          }
      }
    }

    // M tables per so2: M[so2](i, j) = int_0^{v_j} dtau' [dgamma_2(x+y-tau') ER
    // + gamma_2(x+y-tau') EdR](tau', j); i enters through xi = i + j.
    std::vector<GridFn2> M(kNSO, GridFn2(vgrid));
    {
      std::vector<cplx> cg, cd;
      for (int so2 = 0; so2 < kNSO; ++so2) {
        const int ab = so_bar(so2);
        for (int j = 1; j < nv; ++j)
          for (int i = 0; i + j < nv; ++i) {
            const int xi = i + j;
            assemble_coeffs(cdgam[static_cast<size_t>(so2)], xi, j, false, cd);
            assemble_coeffs(cgam[static_cast<size_t>(so2)], xi, j, i == 0, cg);
            SuperOp acc;
            for (int q = 0; q <= j; ++q) {
              if (cd[static_cast<size_t>(q)] != 0.0)
                axpy(acc, cd[static_cast<size_t>(q)],
                     ER[static_cast<size_t>(ab)][static_cast<size_t>(q) * nv + j]);
              if (cg[static_cast<size_t>(q)] != 0.0)
                axpy(acc, cg[static_cast<size_t>(q)],
                     EdR[static_cast<size_t>(ab)][static_cast<size_t>(q) * nv + j]);
            }
            M[static_cast<size_t>(so2)].at(i, j) = acc;
          }
      }
    }

    // Per external component: W convolutions and the assembled A-topology sum.
    for (int comp = 0; comp < static_cast<int>(phi.r1_components.size()); ++comp) {
      const int so1 = phi.r1_components[static_cast<size_t>(comp)];
      // stage 1: A1(i, vcol) = int_0^{v_i} du Pi(v_i - u) R_so1(u, vcol)
      GridFn2 A1(vgrid), A1d(vgrid);
      SuperOp tmp;
      for (int vcol = 0; vcol < nv; ++vcol)
        for (int i = 1; i + vcol < nv; ++i) {
          SuperOp accR, accD;
          for (int u = 0; u <= i; ++u) {
            const double w = trap_w(u, 0, i) * dtv;
            matmul(tmp, pi_v[static_cast<size_t>(i - u)], R.R1[static_cast<size_t>(so1)]->at(u, vcol));
            axpy(accR, w, tmp);
            matmul(tmp, pi_v[static_cast<size_t>(i - u)], dR.R1[static_cast<size_t>(so1)]->at(u, vcol));
            axpy(accD, w, tmp);
          }
          A1.at(i, vcol) = accR;
          A1d.at(i, vcol) = accD;
        }
      // stage 2: W(i, j) = int_0^{v_j} dv A1(i, v) Pi(v_j - v)
      GridFn2 W(vgrid), Wd(vgrid);
      for (int i = 1; i < nv; ++i)
        for (int j = 1; i + j < nv; ++j) {
          SuperOp accR, accD;
          for (int vv = 0; vv <= j; ++vv) {
            const double w = trap_w(vv, 0, j) * dtv;
            matmul(tmp, A1.at(i, vv), pi_v[static_cast<size_t>(j - vv)]);
            axpy(accR, w, tmp);
            matmul(tmp, A1d.at(i, vv), pi_v[static_cast<size_t>(j - vv)]);
            axpy(accD, w, tmp);
          }
          W.at(i, j) = accR;
          Wd.at(i, j) = accD;
        }

      GridFn2& dR1out = out.deriv.R1[static_cast<size_t>(comp)];
      SuperOp cell, sw;
      for (int i = 0; i < nv; ++i)
        for (int j = 0; i + j < nv; ++j) {
          const int xi = i + j;
          SuperOp acc;
          if (xi > 0) {
            for (int so2 = 0; so2 < kNSO; ++so2) {
              const cplx g2 = gav.g[static_cast<size_t>(so2)][static_cast<size_t>(xi)];
              const cplx dg2 = gav.dg[static_cast<size_t>(so2)][static_cast<size_t>(xi)];
              const int ab = so_bar(so2);
              // bare-bare with slashed contraction, slashed lines
              if (dg2 != 0.0) {
                matmul(cell, T.p(so2, so1, i), T.xr(ab, j));
                axpy(acc, dg2, cell);
              }
              if (g2 != 0.0) {
                matmul(cell, Td.p(so2, so1, i), T.xr(ab, j));
                axpy(acc, g2, cell);
                matmul(cell, T.p(so2, so1, i), Td.xr(ab, j));
                axpy(acc, g2, cell);
              }
              // middle-regular blocks (W with dgamma, Wd with gamma)
              if (dg2 != 0.0 && i >= 1 && j >= 1) {
                matmul(sw, F.plus(so2), W.at(i, j));
                matmul(cell, sw, F.plus(ab));
                axpy(acc, dg2, cell);
              }
              if (g2 != 0.0 && i >= 1 && j >= 1) {
                matmul(sw, F.plus(so2), Wd.at(i, j));
                matmul(cell, sw, F.plus(ab));
                axpy(acc, g2, cell);
              }
            }
          }
          // right-regular blocks via the per-index M tables
          if (j >= 1) {
            for (int so2 = 0; so2 < kNSO; ++so2) {
              matmul(cell, T.p(so2, so1, i), M[static_cast<size_t>(so2)].at(i, j));
              acc += cell;
            }
          }
          dR1out.at(i, j) = acc;
        }
    }

    // ---------- two-loop insertions, evaluated on the w axes ----------
    const auto pi_w = sample_axis(pi, wgrid);
    const double dtw = wgrid.dt();
    std::array<RetardedCells, kNSO> cgam_w, cdgam_w;
    std::array<std::vector<std::vector<cplx>>, kNSO> fw_g, fw_dg;  // forward coeffs over w
    for (int so = 0; so < kNSO; ++so) {
      const auto u = so_unpack(so);
      cgam_w[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.gamma(u.eta, u.sigma, t); }, wgrid);
      cdgam_w[static_cast<size_t>(so)] =
          build_retarded_cells([&](double t) { return c.dgamma(u.eta, u.sigma, t); }, wgrid);
      // forward weights int_0^{w_m} f(w) F(w) dw
      fw_g[static_cast<size_t>(so)].resize(static_cast<size_t>(nw));
      fw_dg[static_cast<size_t>(so)].resize(static_cast<size_t>(nw));
      for (int m = 1; m < nw; ++m) {
        fw_g[static_cast<size_t>(so)][static_cast<size_t>(m)] =
            weighted_cell_coeffs([&](double t) { return c.gamma(u.eta, u.sigma, t); }, dtw, m,
                                 SingularEdge::Lo);
        fw_dg[static_cast<size_t>(so)][static_cast<size_t>(m)] =
            weighted_cell_coeffs([&](double t) { return c.dgamma(u.eta, u.sigma, t); }, dtw, m,
                                 SingularEdge::None);
      }
    }

    // J tables for every ordered pair: J[pair](m, ib, iz) =
    // int_0^{w_m} du Pi(w_m - u) Gamma_pair(u, ib, iz); Jd uses dGamma.
    std::vector<GridFn3> J(16, GridFn3(wgrid)), Jd(16, GridFn3(wgrid));
    {
      SuperOp tmp;
      for (int pair = 0; pair < 16; ++pair) {
        const GridFn3& src = *R.G12[static_cast<size_t>(pair)];
        const GridFn3& srcd = *dR.G12[static_cast<size_t>(pair)];
        for (int ib = 0; ib < nw; ++ib)
          for (int iz = 0; ib + iz < nw; ++iz)
            for (int m = 1; m + ib + iz < nw; ++m) {
              SuperOp accJ, accJd;
              for (int mu = 0; mu <= m; ++mu) {
                const double w = trap_w(mu, 0, m) * dtw;
                matmul(tmp, pi_w[static_cast<size_t>(m - mu)], src.at(mu, ib, iz));
                axpy(accJ, w, tmp);
                matmul(tmp, pi_w[static_cast<size_t>(m - mu)], srcd.at(mu, ib, iz));
                axpy(accJd, w, tmp);
              }
              J[static_cast<size_t>(pair)].at(m, ib, iz) = accJ;
              Jd[static_cast<size_t>(pair)].at(m, ib, iz) = accJd;
            }
      }
    }

    for (int comp = 0; comp < static_cast<int>(phi.r1_components.size()); ++comp) {
      const int so1 = phi.r1_components[static_cast<size_t>(comp)];
      GridFn2 wout(wgrid);
      SuperOp inner, cell;
      std::vector<cplx> cq;
      for (int ix = 1; ix < nw; ++ix)
        for (int iy = 0; ix + iy < nw; ++iy) {
          SuperOp acc;
          const int xi = ix + iy;
          for (int so2 = 0; so2 < kNSO; ++so2) {
            const int ab = so_bar(so2);
            // insertion with the contraction entering the left pair slot
            const auto& cfd = fw_dg[static_cast<size_t>(so2)][static_cast<size_t>(ix)];
            const auto& cfg = fw_g[static_cast<size_t>(so2)][static_cast<size_t>(ix)];
            inner.clear();
            for (int m = 1; m <= ix; ++m) {
              if (cfd[static_cast<size_t>(m)] != 0.0)
                axpy(inner, cfd[static_cast<size_t>(m)],
                     J[static_cast<size_t>(ab * kNSO + so1)].at(m, ix - m, iy));
              if (cfg[static_cast<size_t>(m)] != 0.0)
                axpy(inner, cfg[static_cast<size_t>(m)],
                     Jd[static_cast<size_t>(ab * kNSO + so1)].at(m, ix - m, iy));
            }
            matmul(cell, F.plus(so2), inner);
            axpy(acc, -1.0, cell);
            // insertion with the contraction entering the right pair slot
            assemble_coeffs(cdgam_w[static_cast<size_t>(so2)], xi, iy, false, cq);
            SuperOp accu;
            bool any = false;
            for (int u = 0; u <= ix; ++u) {
              inner.clear();
              bool nz = false;
              for (int q = 0; q <= iy; ++q) {
                if (cq[static_cast<size_t>(q)] == 0.0) continue;
                axpy(inner, cq[static_cast<size_t>(q)],
                     R.G12[static_cast<size_t>(so1 * kNSO + ab)]->at(u, iy - q, q));
                nz = true;
              }
              if (!nz) continue;
              matmul(cell, pi_w[static_cast<size_t>(ix - u)], inner);
              axpy(accu, trap_w(u, 0, ix) * dtw, cell);
              any = true;
            }
            assemble_coeffs(cgam_w[static_cast<size_t>(so2)], xi, iy, false, cq);
            for (int u = 0; u <= ix; ++u) {
              inner.clear();
              bool nz = false;
              for (int q = 0; q <= iy; ++q) {
                if (cq[static_cast<size_t>(q)] == 0.0) continue;
                axpy(inner, cq[static_cast<size_t>(q)],
                     dR.G12[static_cast<size_t>(so1 * kNSO + ab)]->at(u, iy - q, q));
                nz = true;
              }
              if (!nz) continue;
              matmul(cell, pi_w[static_cast<size_t>(ix - u)], inner);
              axpy(accu, trap_w(u, 0, ix) * dtw, cell);
              any = true;
            }
            if (any) {
              matmul(cell, F.plus(so2), accu);
              acc += cell;
            }
          }
          wout.at(ix, iy) = acc;
        }
      // upsample the w-grid contribution onto the v axes and accumulate
      GridFn2& dR1out = out.deriv.R1[static_cast<size_t>(comp)];
      for (int i = 0; i < nv; ++i)
        for (int j = 0; i + j < nv; ++j) {
          const SuperOp add = sample_bilinear(wout, vgrid.t(i), vgrid.t(j));
          dR1out.at(i, j) += add;
        }
    }

    // ---------- two-loop vertex flow ----------
    {
      const AxisTables Tw = build_axis_tables(pi_w);
      const GammaAxis gaw = sample_gamma_axis(c, wgrid);
      SuperOp chain, cell;
      for (int comp = 0; comp < static_cast<int>(phi.g12_pairs.size()); ++comp) {
        const auto [si, sj] = phi.g12_pairs[static_cast<size_t>(comp)];
        GridFn3& dG = out.deriv.G12[static_cast<size_t>(comp)];
        for (int i = 0; i < nw; ++i)
          for (int j = 0; i + j < nw; ++j)
            for (int k = 0; i + j + k < nw; ++k) {
              const int xi = i + j + k;
              if (xi == 0) continue;  // slash vanishes at zero time
              SuperOp acc;
              for (int so3 = 0; so3 < kNSO; ++so3) {
                const cplx dg3 = gaw.dg[static_cast<size_t>(so3)][static_cast<size_t>(xi)];
                if (dg3 == 0.0) continue;
                matmul(chain, Tw.p(so3, si, i), Tw.xr(sj, j));
                matmul(cell, chain, Tw.xr(so_bar(so3), k));
                axpy(acc, -dg3, cell);
              }
              dG.at(i, j, k) = acc;
            }
      }
    }
  }

  return out;
}

GridFn1 state_propagator(const ModelParams& p, const FlowState& phi) {
  const GridFn1 pi_inf = propagator_infty_grid(p, phi.sigma.g);
  return solve_dyson(pi_inf, phi.sigma);
}

}  // namespace tflow

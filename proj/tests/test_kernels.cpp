#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tflow/flow.hpp"
#include "tflow/kernels.hpp"
#include "tflow/observables.hpp"

using namespace tflow;

namespace {

std::mt19937_64 rng(0xfeedbeefu);

SuperOp rand_superop() {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  SuperOp s;
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) s.set(r, c, cplx(d(rng), d(rng)));
  return s;
}

ModelParams two_lead(double eps, double U, double V, double gamma = 1.0) {
  ModelParams p;
  p.epsilon = eps;
  p.U = U;
  p.reservoirs = {{gamma, gamma, V / 2, 0.0}, {gamma, gamma, -V / 2, 0.0}};
  return p;
}

ContractionEval eval_at(const ModelParams& p, double T) {
  std::vector<double> Ts(p.reservoirs.size(), T), ws(p.reservoirs.size(), 1.0);
  return ContractionEval(p, Ts, ws);
}

// worst occupation deviation from the exact noninteracting result over a
// handful of probe times
double u0_occupation_defect(const ModelParams& q, double T) {
  TimeGrid g{8.0, 161};
  ModelParams qT = q;
  for (auto& r : qT.reservoirs) r.T_final = T;
  GridFn1 pinf = propagator_infty_grid(q, g);
  GridFn1 sig = pt_kernel(q, eval_at(q, T), pinf, 2);
  GridFn1 pi = solve_dyson(pinf, sig);
  auto rho = evolve_density(pi, initial_density("empty"));
  double worst = 0.0;
  for (int k : {8, 32, 64, 128, 160}) {
    double ref = noninteracting_occupation(qT, 0, 0.0, g.t(k));
    double got = local_observables(rho[static_cast<size_t>(k)]).n_up;
    worst = std::max(worst, std::abs(got - ref));
  }
  return worst;
}

}  // namespace

TEST_CASE("propagator grid is the exact semigroup family") {
  ModelParams p = two_lead(0.5, 4.0, 1.0);
  TimeGrid g{6.0, 61};
  GridFn1 pi = propagator_infty_grid(p, g);
  CHECK(pi[0].max_abs_diff(SuperOp::identity()) < 1e-14);
  // nodes match the dense exponential
  for (int k : {1, 7, 60}) {
    CHECK(pi[k].max_abs_diff(propagator_infty(p, g.t(k))) < 1e-11);
  }
  // consecutive powers multiply exactly
  CHECK((pi[1] * pi[1]).max_abs_diff(pi[2]) < 1e-13);
  CHECK((pi[3] * pi[4]).max_abs_diff(pi[7]) < 1e-13);
}

TEST_CASE("pair bracket limit reproduces the Laurent expansion") {
  SuperOp Ap = rand_superop(), Bp = rand_superop(), Am = rand_superop(), Bm = rand_superop();
  SuperOp M0 = rand_superop(), M1 = rand_superop();
  cplx res(0.3, -0.8), fp(1.1, 0.2), fm(-0.4, 0.9);

  PairLimit lim = pair_bracket_limit(res, fp, fm, Ap, Bp, Am, Bm, M0, M1);

  // direct evaluation at finite d: sum_eta (res/d + f_eta) A_eta (M0 + d M1) B_eta
  // is exactly pole/d + finite + d * X, so the residual must scale linearly
  auto eval = [&](double d) {
    SuperOp M = M0 + M1 * cplx(d, 0.0);
    SuperOp out = Ap * M * Bp * (res / d + fp);
    out += Am * M * Bm * (res / d + fm);
    return out;
  };
  auto residual = [&](double d) {
    SuperOp r = eval(d);
    axpy(r, cplx(-1.0 / d, 0.0), lim.pole);
    r -= lim.finite;
    return r;
  };
  SuperOp r1 = residual(1e-2), r2 = residual(1e-3);
  // linear-in-d residual: r(d)/d is a fixed matrix
  SuperOp slope1 = r1 * cplx(1e2, 0.0), slope2 = r2 * cplx(1e3, 0.0);
  CHECK(slope1.max_abs_diff(slope2) < 1e-7);
  // and it is a small correction relative to the finite part at this d
  CHECK(r2.max_abs() < 1e-2 * lim.finite.max_abs());
}

TEST_CASE("zero-time kernel: trace annihilation and one-loop consistency") {
  ModelParams p = two_lead(0.3, 2.0, 1.0);
  SuperOp s0 = zero_time_kernel(p);
  CHECK(s0.max_abs() > 0.1);

  SCovec row = apply(trace_covector(), s0);
  double worst = 0.0;
  for (int i = 0; i < kSDim; ++i) worst = std::max(worst, std::abs(row[i]));
  CHECK(worst < 1e-13);

  // the one-loop kernel lands on it at t = 0 and the two-loop part vanishes
  TimeGrid g{6.0, 121};
  GridFn1 pinf = propagator_infty_grid(p, g);
  ContractionEval c = eval_at(p, 2.0);
  GridFn1 s1 = sigma_order1(p, c, pinf);
  CHECK(s1[0].max_abs_diff(s0) < 1e-11);
  GridFn1 s2 = sigma_order2(p, c, pinf);
  CHECK(s2[0].max_abs() < 1e-12);
}

TEST_CASE("kernel symmetries on the grid") {
  ModelParams p = two_lead(0.4, 1.5, 0.8);
  TimeGrid g{6.0, 101};
  GridFn1 pinf = propagator_infty_grid(p, g);
  GridFn1 sig = pt_kernel(p, eval_at(p, 2.0), pinf, 2);

  // spin-symmetric couplings: conjugation with the spin swap is a no-op
  SuperOp S = spin_swap();
  double worst = 0.0;
  for (int k = 0; k < g.n; ++k) {
    SuperOp sw = S * sig[k] * S;
    worst = std::max(worst, sw.max_abs_diff(sig[k]));
  }
  CHECK(worst < 1e-11);

  // trace annihilation node by node (trace preservation of the full Dyson Pi)
  worst = 0.0;
  for (int k = 0; k < g.n; ++k) {
    SCovec row = apply(trace_covector(), sig[k]);
    for (int i = 0; i < kSDim; ++i) worst = std::max(worst, std::abs(row[i]));
  }
  CHECK(worst < 1e-11);
}

TEST_CASE("short-time expansion of the Dyson propagator") {
  ModelParams p = two_lead(0.3, 2.0, 1.0);
  TimeGrid g{10.0, 256};
  GridFn1 pinf = propagator_infty_grid(p, g);
  GridFn1 sig = pt_kernel(p, eval_at(p, 5.0), pinf, 2);
  GridFn1 pi = solve_dyson(pinf, sig);

  // Pi(dt) = Pi_inf(dt) - (i/2) Sigma(0) dt^2 + O(dt^3)
  double dt = g.dt();
  SuperOp lhs = pi[1] - pinf[1];
  axpy(lhs, cplx(0.0, 0.5 * dt * dt), zero_time_kernel(p));
  CHECK(lhs.max_abs() < 5.0 * dt * dt * dt);

  // and the propagator stays trace preserving and completely positive
  CPDiagnostics d = cp_trace_hermiticity(pi[g.n - 1]);
  CHECK(d.trace_err < 1e-12);
  CHECK(d.herm_defect < 1e-12);
  CHECK(d.choi_min > -1e-10);
}

TEST_CASE("noninteracting limit against the frequency-integral oracle") {
  ModelParams q = two_lead(0.4, 0.0, 1.0);

  double worst2 = u0_occupation_defect(q, 1.0);
  INFO("order 2 defect: ", worst2);
  CHECK(worst2 < 5e-4);

  // The occupation sector cannot see the crossed-diagram sign (both two-loop
  // terms drop out of it for diagonal initial states), so pin the sign with
  // the flow itself: at U = 0 the renormalized series terminates and the
  // flowed kernel must land on the order-2 one elementwise. A coarse grid is
  // enough to separate the two sign choices.
  TimeGrid g{4.0, 101};
  VertexGrids vg{{4.0, 16}, {4.0, 7}};
  TemperaturePath path = TemperaturePath::simultaneous(q, 50.0, 1.0);
  StepperConfig sc;
  FlowResult fr = run_flow(q, path, g, vg, sc, {1.0});
  const GridFn1& flowed = fr.snapshots.back().sigma;

  GridFn1 pinf = propagator_infty_grid(q, g);
  ContractionEval c = eval_at(q, 1.0);
  PTOptions flip;
  flip.crossed_sign = -1.0;
  double dev = flowed.sup_norm_diff(pt_kernel(q, c, pinf, 2));
  double dev_flip = flowed.sup_norm_diff(pt_kernel(q, c, pinf, 2, flip));
  INFO("flow vs order 2: ", dev, "  vs flipped sign: ", dev_flip);
  CHECK(dev < 4e-3);
  CHECK(dev < 0.5 * dev_flip);
}

TEST_CASE("current kernel: equilibrium stationarity and lead swap") {
  // equilibrium (V = 0): transient current decays to zero
  {
    ModelParams p = two_lead(0.6, 1.5, 0.0);
    TimeGrid g{8.0, 161};
    GridFn1 pinf = propagator_infty_grid(p, g);
    ContractionEval c = eval_at(p, 2.0);
    GridFn1 sig = pt_kernel(p, c, pinf, 2);
    GridFn1 pi = solve_dyson(pinf, sig);
    auto rho = evolve_density(pi, initial_density("empty"));
    GridFn1 sI = current_pt_kernel(p, c, pinf, 0, 2);
    auto I = current_series(p, 0, sI, rho);
    PlateauValue tail = stationary_extract(I, g);
    INFO("equilibrium tail current: ", tail.value);
    CHECK(std::abs(tail.value) < 2e-3);
    // early transient is genuinely nonzero, so the late zero is not trivial
    CHECK(std::abs(I[3]) > 0.05);
  }

  // swapping the bias sign swaps the roles of the two leads
  {
    ModelParams p = two_lead(0.4, 1.5, 1.2);
    ModelParams ps = p;
    std::swap(ps.reservoirs[0], ps.reservoirs[1]);
    TimeGrid g{6.0, 121};
    GridFn1 pinf = propagator_infty_grid(p, g);
    ContractionEval c = eval_at(p, 2.0);
    ContractionEval cs = eval_at(ps, 2.0);
    GridFn1 pi = solve_dyson(pinf, pt_kernel(p, c, pinf, 2));
    GridFn1 pis = solve_dyson(pinf, pt_kernel(ps, cs, pinf, 2));
    auto rho = evolve_density(pi, initial_density("empty"));
    auto rhos = evolve_density(pis, initial_density("empty"));
    GridFn1 sIL = current_pt_kernel(p, c, pinf, 0, 2);
    GridFn1 sIR = current_pt_kernel(ps, cs, pinf, 1, 2);
    auto IL = current_series(p, 0, sIL, rho);
    auto IR = current_series(ps, 1, sIR, rhos);
    double worst = 0.0;
    for (size_t k = 0; k < IL.size(); ++k) worst = std::max(worst, std::abs(IL[k] - IR[k]));
    CHECK(worst < 1e-9);
  }
}

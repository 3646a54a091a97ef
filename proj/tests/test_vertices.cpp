#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tflow/observables.hpp"
#include "tflow/vertices.hpp"

using namespace tflow;

namespace {

ModelParams two_lead(double eps, double U, double V, double gamma = 1.0) {
  ModelParams p;
  p.epsilon = eps;
  p.U = U;
  p.reservoirs = {{gamma, gamma, V / 2, 0.0}, {gamma, gamma, -V / 2, 0.0}};
  return p;
}

// small grids keep the initialization cheap in unit tests
const TimeGrid kFine{5.0, 101};
const VertexGrids kVg{{5.0, 16}, {5.0, 7}};

// independent reassembly of the bare one-loop vertex derivative
//   D(i,j) = sum_2 dgamma_2(v_i + v_j) G2+ Pi(v_i) G1+ Pi(v_j) G2bar+
// which is the whole R1 flow at U = 0 (all line-dressing corrections vanish
// with the interaction)
GridFn2 bare_r1_derivative(const ModelParams& p, const TemperaturePath& path,
                           const FlowState& phi, int so1) {
  ContractionEval c(p, path.temps(phi.theta), path.weights(phi.theta));
  GridFn1 pi = state_propagator(p, phi);
  const int nv = kVg.v.n;
  const double hv = kVg.v.dt();
  std::vector<SuperOp> piv(static_cast<size_t>(nv));
  for (int i = 0; i < nv; ++i) sample_cubic_into(piv[static_cast<size_t>(i)], pi, i * hv);

  const auto& F = fields();
  GridFn2 out(kVg.v);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv - i; ++j) {
      if (i == 0 && j == 0) continue;
      const double xi = (i + j) * hv;
      SuperOp acc;
      for (int so2 = 0; so2 < kNSO; ++so2) {
        const auto [eta2, sig2] = so_unpack(so2);
        const cplx w = c.dgamma(eta2, sig2, xi);
        if (w == cplx(0.0, 0.0)) continue;
        SuperOp t1 = F.plus(so2) * piv[static_cast<size_t>(i)] * F.plus(so1) *
                     piv[static_cast<size_t>(j)] * F.plus(so_bar(so2));
        axpy(acc, w, t1);
      }
      out.at(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("FlowState vector-space operations") {
  TimeGrid fine{1.0, 4};
  VertexGrids vg{{1.0, 3}, {1.0, 2}};
  FlowState phi;
  phi.theta = 2.0;
  phi.sigma = GridFn1(fine);
  phi.sigma_I = {GridFn1(fine)};
  phi.spin_reduced = false;
  phi.r1_components = {0};
  phi.R1 = {GridFn2(vg.v)};
  phi.g12_pairs = {{0, 2}};
  phi.G12 = {GridFn3(vg.w)};

  phi.sigma[1].set(0, 0, cplx(2.0, 0.0));
  phi.sigma_I[0][2].set(1, 1, cplx(0.0, -4.0));
  phi.R1[0].at(1, 1).set(3, 3, cplx(1.0, 1.0));
  phi.G12[0].at(0, 1, 0).set(5, 5, cplx(-2.0, 0.0));

  FlowState z = FlowState::zeros_like(phi);
  CHECK(z.sigma.sup_norm() == 0.0);
  CHECK(z.R1[0].sup_norm() == 0.0);
  CHECK(z.G12[0].sup_norm() == 0.0);
  CHECK(z.sigma.g == fine);
  CHECK(z.r1_components == phi.r1_components);
  CHECK(z.theta == phi.theta);

  FlowState acc = FlowState::zeros_like(phi);
  acc.add_scaled(3.0, phi);
  CHECK(std::abs(acc.sigma[1](0, 0) - cplx(6.0, 0.0)) < 1e-15);
  CHECK(std::abs(acc.G12[0].at(0, 1, 0)(5, 5) - cplx(-6.0, 0.0)) < 1e-15);
  acc.scale(-0.5);
  CHECK(std::abs(acc.sigma_I[0][2](1, 1) - cplx(0.0, 6.0)) < 1e-15);

  // relative difference norm: per component sup|a-b| / (sup|b| + floor)
  FlowState a = FlowState::zeros_like(phi), b = FlowState::zeros_like(phi);
  a.sigma[1].set(0, 0, cplx(2.0, 0.0));
  b.sigma[1].set(0, 0, cplx(1.0, 0.0));
  a.R1[0].at(1, 1).set(3, 3, cplx(0.4, 0.0));
  b.R1[0].at(1, 1).set(3, 3, cplx(0.1, 0.0));
  CHECK(a.rel_diff_norm(b) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(a.rel_diff_norm(a) == 0.0);
}

TEST_CASE("hot-end initialization: structure and kernel anchors") {
  ModelParams p = two_lead(0.5, 4.0, 1.0);
  TemperaturePath path = TemperaturePath::simultaneous(p, 50.0, 0.0);
  FlowState phi = init_state(p, path, kFine, kVg);

  CHECK(phi.theta == doctest::Approx(50.0));
  CHECK(phi.spin_reduced);
  CHECK(phi.r1_components.size() == 2);
  CHECK(phi.R1.size() == 2);
  CHECK(phi.g12_pairs.size() == 8);
  CHECK(phi.G12.size() == 8);
  CHECK(phi.sigma_I.size() == 2);
  // stored external legs are the spin-up ones
  for (int c : phi.r1_components) CHECK(so_unpack(c).sigma == 0);

  // the kernel starts on the algebraic zero-time anchor
  CHECK(phi.sigma[0].max_abs_diff(zero_time_kernel(p)) < 1e-10);

  // trace annihilation node by node
  double worst = 0.0;
  for (int k = 0; k < kFine.n; ++k) {
    SCovec row = apply(trace_covector(), phi.sigma[k]);
    for (int i = 0; i < kSDim; ++i) worst = std::max(worst, std::abs(row[i]));
  }
  CHECK(worst < 1e-11);

  // spin-swap symmetry of the kernel for symmetric couplings
  SuperOp S = spin_swap();
  worst = 0.0;
  for (int k = 0; k < kFine.n; ++k)
    worst = std::max(worst, (S * phi.sigma[k] * S).max_abs_diff(phi.sigma[k]));
  CHECK(worst < 1e-11);

  // propagator wrapper: Dyson solve of the stored kernel, physical at the end
  GridFn1 pi = state_propagator(p, phi);
  GridFn1 direct = solve_dyson(propagator_infty_grid(p, kFine), phi.sigma);
  CHECK(pi.sup_norm_diff(direct) < 1e-13);
  CPDiagnostics d = cp_trace_hermiticity(pi[kFine.n - 1]);
  CHECK(d.trace_err < 1e-11);
  CHECK(d.choi_min > -1e-10);
}

TEST_CASE("spin-asymmetric couplings disable the reduction") {
  ModelParams p = two_lead(0.5, 2.0, 1.0);
  p.reservoirs[0].gamma_dn = 0.5;
  p.reservoirs[1].gamma_dn = 0.5;
  TemperaturePath path = TemperaturePath::simultaneous(p, 50.0, 0.0);
  FlowState phi = init_state(p, path, kFine, kVg);
  CHECK(!phi.spin_reduced);
  CHECK(phi.r1_components.size() == 4);
  CHECK(phi.g12_pairs.size() == 16);

  // expansion aliases the stored data directly
  ExpandedVertices E = expand_vertices(phi);
  for (size_t i = 0; i < phi.r1_components.size(); ++i)
    CHECK(E.R1[static_cast<size_t>(phi.r1_components[i])] == &phi.R1[i]);
}

TEST_CASE("vertex expansion mirrors the stored spin block") {
  ModelParams p = two_lead(0.5, 4.0, 1.0);
  TemperaturePath path = TemperaturePath::simultaneous(p, 50.0, 0.0);
  FlowState phi = init_state(p, path, kFine, kVg);
  ExpandedVertices E = expand_vertices(phi);

  SuperOp S = spin_swap();
  for (int c = 0; c < kNSO; ++c) {
    REQUIRE(E.R1[static_cast<size_t>(c)] != nullptr);
    const GridFn2& flip = *E.R1[static_cast<size_t>(so_spinflip(c))];
    const GridFn2& self = *E.R1[static_cast<size_t>(c)];
    double worst = 0.0;
    for (int i : {1, 3, 7})
      for (int j : {0, 2, 5}) {
        SuperOp m = S * self.at(i, j) * S;
        worst = std::max(worst, m.max_abs_diff(flip.at(i, j)));
      }
    CHECK(worst < 1e-12);
  }
  for (int soi = 0; soi < kNSO; ++soi)
    for (int soj = 0; soj < kNSO; ++soj) {
      const GridFn3* g = E.G12[static_cast<size_t>(soi * 4 + soj)];
      REQUIRE(g != nullptr);
      const GridFn3* gf =
          E.G12[static_cast<size_t>(so_spinflip(soi) * 4 + so_spinflip(soj))];
      SuperOp m = S * g->at(1, 1, 1) * S;
      CHECK(m.max_abs_diff(gf->at(1, 1, 1)) < 1e-12);
    }
}

TEST_CASE("noninteracting vertex flow reduces to the bare insertion") {
  ModelParams p = two_lead(0.4, 0.0, 1.0);
  TemperaturePath path = TemperaturePath::simultaneous(p, 5.0, 0.0);
  FlowState phi = init_state(p, path, kFine, kVg);
  RhsResult r = flow_rhs(p, path, phi, FlowState::zeros_like(phi));

  // the zero-time kernel value is an invariant of the flow
  CHECK(r.deriv.sigma[0].max_abs() < 1e-12);

  // R1 flow equals + sum_2 dgamma_2 G+ Pi G+ Pi G+ with nothing else left
  for (size_t ci = 0; ci < phi.r1_components.size(); ++ci) {
    GridFn2 ref = bare_r1_derivative(p, path, phi, phi.r1_components[ci]);
    INFO("component ", ci, ", |rhs| = ", r.deriv.R1[ci].sup_norm());
    CHECK(ref.sup_norm_diff(r.deriv.R1[ci]) < 1e-8);
    CHECK(r.deriv.R1[ci].sup_norm() > 1e-4);  // non-vacuous
  }

  // the two-particle vertex hardly flows without interaction: three orders
  // below the one-loop vertex motion
  for (const auto& g : r.deriv.G12) CHECK(g.sup_norm() < 0.01 * r.deriv.R1[0].sup_norm());

  // with interaction the dressed insertions must show up on top of the bare
  // term, otherwise the equality above tests nothing
  ModelParams q = two_lead(0.4, 3.0, 1.0);
  FlowState phiq = init_state(q, path, kFine, kVg);
  RhsResult rq = flow_rhs(q, path, phiq, FlowState::zeros_like(phiq));
  GridFn2 refq = bare_r1_derivative(q, path, phiq, phiq.r1_components[0]);
  CHECK(refq.sup_norm_diff(rq.deriv.R1[0]) > 1e-5);
}

TEST_CASE("flow right-hand side matches the hot-end family derivative at U=0") {
  ModelParams p = two_lead(0.4, 0.0, 1.0);
  const double th = 5.0, d = 0.02;
  TemperaturePath pp = TemperaturePath::simultaneous(p, th + d, 0.0);
  TemperaturePath pm = TemperaturePath::simultaneous(p, th - d, 0.0);
  FlowState fd = init_state(p, pp, kFine, kVg);
  fd.add_scaled(-1.0, init_state(p, pm, kFine, kVg));
  fd.scale(1.0 / (2.0 * d));

  TemperaturePath pc = TemperaturePath::simultaneous(p, th, 0.0);
  FlowState phi = init_state(p, pc, kFine, kVg);
  RhsResult r = flow_rhs(p, pc, phi, fd);

  // at U = 0 the renormalized hot-end family solves the hierarchy, so its
  // theta derivative and the right-hand side agree component by component;
  // the kernel comparison is truncation-limited, the vertex one is sharp
  double sig_scale = r.deriv.sigma.sup_norm();
  INFO("|d sigma| = ", sig_scale);
  CHECK(fd.sigma.sup_norm_diff(r.deriv.sigma) < 0.02 * sig_scale);
  for (size_t i = 0; i < fd.sigma_I.size(); ++i) {
    double s = r.deriv.sigma_I[i].sup_norm();
    CHECK(fd.sigma_I[i].sup_norm_diff(r.deriv.sigma_I[i]) < 0.02 * s);
  }
  for (size_t i = 0; i < fd.R1.size(); ++i) {
    double s = r.deriv.R1[i].sup_norm();
    INFO("R1 component ", i, " scale ", s);
    CHECK(fd.R1[i].sup_norm_diff(r.deriv.R1[i]) < 1e-3 * s);
  }
  for (size_t i = 0; i < fd.G12.size(); ++i)
    CHECK(fd.G12[i].sup_norm_diff(r.deriv.G12[i]) < 1e-8);
}

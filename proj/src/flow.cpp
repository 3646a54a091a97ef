#include "tflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tflow/errors.hpp"
#include "tflow/kernels.hpp"

namespace tflow {

namespace {

bool near(double a, double b) { return std::abs(a - b) <= 1.0e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

FlowResult integrate_flow(const std::function<RhsResult(const FlowState&, const FlowState&)>& rhs_fn,
                          const std::function<Snapshot(const FlowState&)>& snapshot_fn,
                          FlowState phi0, double th_end, const StepperConfig& sc,
                          const std::vector<double>& record_thetas) {
  const double th_start = phi0.theta;

  // Stops: requested record points plus the cold end, strictly decreasing.
  std::vector<double> stops = record_thetas;
  for (double th : stops)
    if (th > th_start || th < th_end)
      throw ValidationError("record temperature outside the flow range");
  stops.push_back(th_end);
  std::sort(stops.begin(), stops.end(), std::greater<double>());
  stops.erase(std::unique(stops.begin(), stops.end(),
                          [](double a, double b) { return near(a, b); }),
              stops.end());

  FlowResult res;
  res.final_state = std::move(phi0);
  FlowState& phi1 = res.final_state;  // newest accepted point, updated in place

  size_t stop_idx = 0;
  while (stop_idx < stops.size() && near(stops[stop_idx], th_start)) {
    if (!near(stops[stop_idx], th_end)) res.snapshots.push_back(snapshot_fn(phi1));
    ++stop_idx;
  }
  if (near(th_start, th_end)) {
    res.snapshots.push_back(snapshot_fn(phi1));
    return res;
  }
  const double first_gap = th_start - (stop_idx < stops.size() ? stops[stop_idx] : th_end);
  double dT_init = std::min(sc.dtheta_init, 0.5 * first_gap);
  if (dT_init <= 0.0) throw ValidationError("degenerate flow range");

  auto rhs = [&](const FlowState& phi, const FlowState& dguess) {
    ++res.n_rhs;
    return rhs_fn(phi, dguess);
  };

  // ---- bootstrap: self-consistent initial slope, then two damped
  // trapezoid substeps to grow a two-point history ----
  FlowState f1 = FlowState::zeros_like(phi1);
  {
    RhsResult r0;
    for (int it = 0; it < std::max(1, sc.bootstrap_fixpoint_iters); ++it) {
      r0 = rhs(phi1, f1);
      f1 = r0.deriv;
    }
  }

  FlowState phi2 = phi1;  // will become the older history point
  FlowState f2 = f1;
  const double h_sub = -0.25 * dT_init;
  const double lam = 0.7;
  for (int sub = 0; sub < 2; ++sub) {
    FlowState base = phi1;
    FlowState fbase = f1;
    FlowState cur = base;
    cur.add_scaled(h_sub, fbase);  // Euler predictor
    cur.theta = base.theta + h_sub;
    // Damped sweeps settle the slope self-consistency; the last sweep must
    // land on the plain trapezoid value, or a fraction of the Euler
    // predictor survives and the startup is only first-order accurate.
    FlowState fcur = fbase;
    for (int it = 0; it < 2; ++it) {
      fcur = rhs(cur, fcur).deriv;
      FlowState trap = base;
      trap.add_scaled(0.5 * h_sub, fbase);
      trap.add_scaled(0.5 * h_sub, fcur);
      trap.theta = cur.theta;
      if (it + 1 < 2) {
        trap.scale(lam);
        cur.scale(1.0 - lam);
        cur.add_scaled(1.0, trap);
      } else {
        cur = std::move(trap);
      }
    }
    fcur = rhs(cur, fcur).deriv;
    phi2 = std::move(base);
    f2 = std::move(fbase);
    phi1 = std::move(cur);
    f1 = std::move(fcur);
  }

  double h_prev = phi1.theta - phi2.theta;  // negative
  double dT = 0.25 * dT_init;               // magnitude of the next attempt

  int steps = 0;
  while (!near(phi1.theta, th_end)) {
    if (++steps > sc.max_steps) {
      std::ostringstream os;
      os << "step budget exhausted at theta = " << phi1.theta;
      throw FlowStalled(os.str());
    }
    if (dT < sc.dtheta_min) {
      std::ostringstream os;
      os << "step size underflow at theta = " << phi1.theta;
      throw FlowStalled(os.str());
    }
    const double next_stop = stops[stop_idx];
    double th0 = phi1.theta - dT;
    if (th0 < next_stop + 0.25 * dT) th0 = next_stop;  // land instead of slivering
    const double h = th0 - phi1.theta;
    const double r = h / h_prev;

    // explicit two-step predictor
    FlowState pred = phi1;
    pred.add_scaled(h * (1.0 + 0.5 * r), f1);
    pred.add_scaled(-h * 0.5 * r, f2);
    pred.theta = th0;

    // backward-difference slope at the predicted point feeds the slashed
    // insertions of the right-hand side
    const double a0 = (1.0 + 2.0 * r) / (1.0 + r);
    const double a1 = -(1.0 + r);
    const double a2 = r * r / (1.0 + r);
    FlowState dguess = FlowState::zeros_like(phi1);
    dguess.add_scaled(a0 / h, pred);
    dguess.add_scaled(a1 / h, phi1);
    dguess.add_scaled(a2 / h, phi2);

    RhsResult f0 = rhs(pred, dguess);

    // two-step implicit-form corrector, evaluated with the predictor slope
    const double c1 = (1.0 + r) * (1.0 + r) / (1.0 + 2.0 * r);
    const double c2 = -r * r / (1.0 + 2.0 * r);
    const double cf = (1.0 + r) * h / (1.0 + 2.0 * r);
    FlowState corr = FlowState::zeros_like(phi1);
    corr.add_scaled(c1, phi1);
    corr.add_scaled(c2, phi2);
    corr.add_scaled(cf, f0.deriv);
    corr.theta = th0;

    const double err = pred.rel_diff_norm(corr);
    StepRecord rec;
    rec.theta = th0;
    rec.h = h;
    rec.err = err;
    rec.dsigma_norm = f0.dsigma_norm;
    rec.accepted = err <= sc.tol;
    res.steps.push_back(rec);

    const double fac = sc.safety * std::pow(sc.tol / std::max(err, 1.0e-300), 1.0 / 3.0);
    if (!rec.accepted) {
      dT *= std::clamp(std::min(fac, 0.5), sc.shrink_min, 0.5);
      continue;
    }

    phi2 = std::move(phi1);
    f2 = std::move(f1);
    phi1 = std::move(corr);
    f1 = std::move(f0.deriv);
    h_prev = h;
    dT = std::abs(h) * std::clamp(fac, sc.shrink_min, sc.grow_max);

    if (near(phi1.theta, next_stop)) {
      phi1.theta = next_stop;
      res.snapshots.push_back(snapshot_fn(phi1));
      ++stop_idx;
    }
  }
  return res;
}

FlowResult run_flow(const ModelParams& p, const TemperaturePath& path, TimeGrid fine,
                    const VertexGrids& vg, const StepperConfig& sc,
                    const std::vector<double>& record_thetas, const PTOptions& opt) {
  FlowState phi0 = init_state(p, path, fine, vg, opt);
  auto rhs = [&p, &path](const FlowState& phi, const FlowState& dguess) {
    return flow_rhs(p, path, phi, dguess);
  };
  auto snap = [&p, &path](const FlowState& phi) {
    Snapshot s;
    s.theta = phi.theta;
    s.temps = path.temps(phi.theta);
    s.sigma = phi.sigma;
    s.sigma_I = phi.sigma_I;
    s.pi = state_propagator(p, phi);
    return s;
  };
  return integrate_flow(rhs, snap, std::move(phi0), path.theta_end(), sc, record_thetas);
}

}  // namespace tflow

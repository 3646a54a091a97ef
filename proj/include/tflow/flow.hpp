#pragma once
#include <functional>
#include <vector>

#include "tflow/vertices.hpp"

namespace tflow {

// Variable-step two-step scheme for the temperature flow: explicit second
// order predictor, implicit-form corrector evaluated explicitly through the
// predicted point, and a proportional step controller on the
// predictor/corrector gap.
struct StepperConfig {
  double tol = 1.0e-4;         // relative predictor-corrector gap per step
  double dtheta_init = 0.5;    // magnitude of the bootstrap descent
  double dtheta_min = 1.0e-9;  // below this the flow counts as stalled
  double safety = 0.9;
  double grow_max = 2.0;
  double shrink_min = 0.3;
  int bootstrap_fixpoint_iters = 3;  // self-consistency sweeps for the first slope
  int max_steps = 100000;
};

// Kernel-level data retained at a requested temperature. Vertex corrections
// are deliberately not copied here; they are bulky and only feed the flow
// itself, not the observables.
struct Snapshot {
  double theta = 0.0;
  std::vector<double> temps;
  GridFn1 sigma;
  std::vector<GridFn1> sigma_I;
  GridFn1 pi;
};

struct StepRecord {
  double theta = 0.0;  // value reached by the attempt
  double h = 0.0;      // signed step taken
  double err = 0.0;
  double dsigma_norm = 0.0;
  bool accepted = false;
};

struct FlowResult {
  std::vector<Snapshot> snapshots;  // ordered hot to cold
  std::vector<StepRecord> steps;
  FlowState final_state;
  int n_rhs = 0;
};

// Integrate the flow from the hot end of the path down to its cold end,
// snapshotting at every requested theta (and always at the cold end). The
// record list may be empty; values outside (theta_end, theta_start] are
// rejected with ValidationError. Throws FlowStalled if the controller drives
// the step under dtheta_min or the step budget runs out.
FlowResult run_flow(const ModelParams& p, const TemperaturePath& path, TimeGrid fine,
                    const VertexGrids& vg, const StepperConfig& sc,
                    const std::vector<double>& record_thetas, const PTOptions& opt = {});

// Driver underneath run_flow, parameterized over the right-hand side and the
// snapshot builder. phi0.theta is the hot end. Exposed so the step scheme can
// be exercised on manufactured problems with known solutions.
FlowResult integrate_flow(const std::function<RhsResult(const FlowState&, const FlowState&)>& rhs_fn,
                          const std::function<Snapshot(const FlowState&)>& snapshot_fn,
                          FlowState phi0, double th_end, const StepperConfig& sc,
                          const std::vector<double>& record_thetas);

}  // namespace tflow

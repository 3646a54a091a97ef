#pragma once
#include <vector>

#include "tflow/kernels.hpp"

namespace tflow {

// Coarse axes for the stored vertex corrections: v for the 2D one-loop
// regular part, w for the 3D two-loop vertex. Both share t_max with the fine
// kernel grid; consumers interpolate.
struct VertexGrids {
  TimeGrid v{10.0, 40};
  TimeGrid w{10.0, 13};
};

// Everything the flow integrates: memory kernel, one current kernel per
// reservoir, the one-loop vertex regular parts and the two-loop vertex.
// When the couplings are spin symmetric only the spin-up external components
// are stored (two R1 components, eight G12 pairs); the spin-down ones are
// reconstructed by spin-swap conjugation where needed.
struct FlowState {
  double theta = 0.0;
  GridFn1 sigma;
  std::vector<GridFn1> sigma_I;  // one per reservoir
  bool spin_reduced = false;
  std::vector<int> r1_components;            // external so indices actually stored
  std::vector<GridFn2> R1;                   // parallel to r1_components
  std::vector<std::pair<int, int>> g12_pairs;  // stored (so_i, so_j) pairs
  std::vector<GridFn3> G12;                  // parallel to g12_pairs

  // Elementwise vector-space operations (same shape required).
  void scale(double a);
  void add_scaled(double a, const FlowState& x);  // this += a*x
  static FlowState zeros_like(const FlowState& proto);
  // max over components of sup|this - o| / (sup|o| + floor); used by the
  // step controller as the relative local error measure.
  double rel_diff_norm(const FlowState& o, double floor = 1.0e-12) const;
};

// Full-index views of the vertex data with spin-reduced storage expanded.
struct ExpandedVertices {
  std::array<const GridFn2*, kNSO> R1{};
  std::array<const GridFn3*, 16> G12{};  // index so_i * 4 + so_j
  std::vector<GridFn2> own2;             // backing storage for mirrored pieces
  std::vector<GridFn3> own3;
};
ExpandedVertices expand_vertices(const FlowState& s);

// Hot-end initial condition at the top of the path: two-loop kernel with
// bare-dressed lines, Dyson propagator, one-loop vertex correction and
// leading two-loop vertex with that propagator on the lines.
FlowState init_state(const ModelParams& p, const TemperaturePath& path, TimeGrid fine,
                     const VertexGrids& vg, const PTOptions& opt = {});

// One evaluation of the flow right-hand side at phi.theta. dphi_guess feeds
// the propagator slash and the slashed-vertex insertions (the scheme is
// explicit: the guess comes from the multistep difference formula).
struct RhsResult {
  FlowState deriv;
  double dsigma_norm = 0.0;  // sup norm of d(sigma)/dtheta, for stall metrics
};
RhsResult flow_rhs(const ModelParams& p, const TemperaturePath& path, const FlowState& phi,
                   const FlowState& dphi_guess);

// Dyson propagator of a state's kernel on its own grid (convenience wrapper
// used by observers and tests).
GridFn1 state_propagator(const ModelParams& p, const FlowState& phi);

}  // namespace tflow

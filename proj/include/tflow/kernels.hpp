#pragma once
#include "tflow/contractions.hpp"
#include "tflow/grid.hpp"

namespace tflow {

// Test hook: flips the relative sign of the crossed two-loop diagram. The
// occupation sector is blind to the flip (both two-loop terms cancel there
// when starting from diagonal states), so the discriminating check is the
// noninteracting flow endpoint against the order-2 kernel, where the
// renormalized series terminates and the match must be elementwise.
struct PTOptions {
  double crossed_sign = +1.0;
};

// e^{-i L_inf t_k} on every node of the grid.
GridFn1 propagator_infty_grid(const ModelParams& p, TimeGrid g);

// Limit data for sum_eta gamma_{eta sigma}(d) A[eta] M(d) B[eta] as d -> 0+,
// with M(d) = M0 + d M1. gamma carries a simple pole residue/d plus a finite
// part that depends on eta. The combination splits into a 1/d piece and a
// finite piece; for the memory kernel the pole piece cancels by field
// anticommutation, for the current kernel it survives but is annihilated by
// the trace covector.
struct PairLimit {
  SuperOp pole;    // coefficient of 1/d
  SuperOp finite;  // d -> 0 remainder
};
PairLimit pair_bracket_limit(cplx residue, cplx finite_plus, cplx finite_minus,
                             const SuperOp& A_p, const SuperOp& B_p, const SuperOp& A_m,
                             const SuperOp& B_m, const SuperOp& M0, const SuperOp& M1);

// Sigma(0): finite zero-time limit of the one-loop kernel; independent of
// temperature, so it anchors both the hot-end initialization and the flow.
SuperOp zero_time_kernel(const ModelParams& p);

// One-loop renormalized kernel Sigma^{(1)}(t) on the grid, lines dressed with
// the supplied propagator (pass the T=infinity one for plain PT).
GridFn1 sigma_order1(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines);

// Two-loop contribution (crossed + nested), same line dressing.
GridFn1 sigma_order2(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines,
                     const PTOptions& opt = {});

// Sum of orders 1..order (order = 1 or 2).
GridFn1 pt_kernel(const ModelParams& p, const ContractionEval& c, const GridFn1& pi_lines,
                  int order, const PTOptions& opt = {});

// Current-kernel variants for reservoir r: leftmost vertex replaced by
// (eta/2) G^- and the leftmost contraction restricted to r. The t = 0 node
// stores the pole-subtracted limit (see current-kernel note in the docs).
GridFn1 current_sigma_order1(const ModelParams& p, const ContractionEval& c,
                             const GridFn1& pi_lines, int r);
GridFn1 current_sigma_order2(const ModelParams& p, const ContractionEval& c,
                             const GridFn1& pi_lines, int r, const PTOptions& opt = {});
GridFn1 current_pt_kernel(const ModelParams& p, const ContractionEval& c,
                          const GridFn1& pi_lines, int r, int order, const PTOptions& opt = {});

}  // namespace tflow

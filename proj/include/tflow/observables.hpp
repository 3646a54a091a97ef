#pragma once
#include <string>
#include <vector>

#include "tflow/grid.hpp"
#include "tflow/algebra.hpp"

namespace tflow {

// Scalars extracted from one impurity density operator (vectorized).
struct LocalObservables {
  double n_up = 0.0;
  double n_dn = 0.0;
  double n_corr = 0.0;  // <n_up n_dn>
  double fluct = 0.0;   // (Delta n)^2 = <n> + 2 <n_up n_dn> - <n>^2
  double trace_re = 0.0;
};
LocalObservables local_observables(const SVec& rho);

// Named initial density operators: "empty", "up", "down", "double", "mixed"
// (the infinite-temperature state). Throws ValidationError on anything else.
Mat4 initial_density(const std::string& name);

// rho(t_k) = Pi(t_k) vec(rho0) for every node.
std::vector<SVec> evolve_density(const GridFn1& pi, const Mat4& rho0);

// Time-resolved particle current out of reservoir r:
//   I_r(t) = sum_sigma Gamma_{r sigma} (1/2 - <n_sigma>(t))
//            - i int_0^t ds  tau . Sigma_I(t - s) rho(s)
// with the integral done by the trapezoid rule on the common grid.
std::vector<double> current_series(const ModelParams& p, int r, const GridFn1& sigma_I,
                                   const std::vector<SVec>& rho);

// Tail-window plateau of a time series: least-squares line over the late
// window, reported as the window-centre value plus the drift across the
// window (a stationarity diagnostic).
struct PlateauValue {
  double value = 0.0;
  double drift = 0.0;
};
PlateauValue stationary_extract(const std::vector<double>& series, const TimeGrid& g);

// Complete-positivity / trace-preservation / hermiticity-preservation
// diagnostics of a propagator at one time: smallest eigenvalue of the
// hermitized Choi matrix, sup-norm defect of tau Pi = tau, and the
// anti-hermitian part of the Choi matrix.
struct CPDiagnostics {
  double choi_min = 0.0;
  double trace_err = 0.0;
  double herm_defect = 0.0;
};
CPDiagnostics cp_trace_hermiticity(const SuperOp& pi_t);

// Eigenvector of Pi(t_ref) with eigenvalue closest to 1, trace-normalized.
SVec fixed_point_state(const SuperOp& pi_t);

// Leading high-temperature stationary current out of reservoir r,
//   I_r = sum_sigma (Gamma_{r sigma} / 4T) (mu_r - sum_r' Gamma_{r' sigma} mu_r' / Gamma_sigma).
double analytic_current_highT(const ModelParams& p, int r, double T);

// Leading high-temperature charge fluctuation (Delta n)^2 = 1/2 (1 - (4 eps + 3U)/(4T)).
double analytic_fluct_highT(double eps, double U, double T);

// Coefficient superoperator Q_r of the leading short-time response of the
// propagator to one reservoir temperature, dPi/dT_r(t) = Q_r t^4 + O(t^5),
// evaluated at reservoir temperature T_r:
//   Q_r = -(pi/36) T_r sum_1 Gamma_{r sigma_1}
//         (G+_1 L_inf G+_1bar + eta_1 mu_r G+_1 G+_1bar).
SuperOp quartic_dpi_coefficient(const ModelParams& p, int r, double T_r);

// Exact noninteracting (U = 0) occupation of spin species sigma at time t for
// an uncorrelated initial filling n0, from the wideband frequency integral.
double noninteracting_occupation(const ModelParams& p, int sigma, double n0, double t);

}  // namespace tflow

#pragma once
#include <vector>

#include "tflow/algebra.hpp"

namespace tflow {

// Piecewise-affine path through reservoir temperature space. The flow runs in
// a scalar parameter theta that decreases from rows.front().theta to
// rows.back().theta; each reservoir temperature is interpolated linearly
// between breakpoints. weights() returns dT_r/dtheta inside the segment
// containing theta, which is what the slashed (path-derivative) contraction
// aggregates over.
class TemperaturePath {
 public:
  struct Row {
    double theta;
    std::vector<double> T;  // one per reservoir
  };

  TemperaturePath() = default;
  explicit TemperaturePath(std::vector<Row> rows);

  // All reservoirs cool together: T_r(theta) = max(theta, T_r^final),
  // theta from T_start down to T_floor.
  static TemperaturePath simultaneous(const ModelParams& p, double T_start, double T_floor);
  // Reservoirs cool one at a time, in index order; theta still decreases
  // monotonically over the concatenated segments.
  static TemperaturePath sequential(const ModelParams& p, double T_start, double T_floor);
  // Explicit table (validated: theta strictly decreasing, consistent arity).
  static TemperaturePath table(std::vector<Row> rows);

  int n_reservoirs() const { return rows_.empty() ? 0 : static_cast<int>(rows_.front().T.size()); }
  double theta_start() const { return rows_.front().theta; }
  double theta_end() const { return rows_.back().theta; }

  std::vector<double> temps(double theta) const;
  std::vector<double> weights(double theta) const;

  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Row> rows_;
};

// Reservoir contraction gamma^-_{eta sigma r}(t) and its temperature slash,
// evaluated for one snapshot of reservoir temperatures T_r and path weights
// b_r = dT_r/dtheta. All signatures take t > 0; the t -> 0+ limit data is
// exposed separately (pole residue plus finite part) because gamma itself
// diverges like 1/t there.
class ContractionEval {
 public:
  ContractionEval(const ModelParams& p, std::vector<double> T, std::vector<double> b);

  int n_reservoirs() const { return static_cast<int>(T_.size()); }

  // sum_r gamma_{eta sigma r}(t); gamma_r = -i Gamma_{r sigma} T_r
  //   e^{i etabar mu_r t} / sinh(pi t T_r), with the T_r -> 0 limit
  //   -i Gamma_{r sigma} e^{i etabar mu_r t} / (pi t).
  cplx gamma(int eta, int sigma, double t) const;
  cplx gamma_res(int eta, int sigma, int r, double t) const;

  // Path-weighted temperature derivative sum_r b_r d(gamma_r)/dT_r; finite
  // for all t >= 0 and exactly 0 at t = 0 and at T_r = 0.
  cplx dgamma(int eta, int sigma, double t) const;
  cplx dgamma_res(int eta, int sigma, int r, double t) const;

  // t -> 0+ structure: gamma(t) = residue/t + finite0 + O(t).
  cplx residue(int sigma) const;                    // -i Gamma^tot_sigma / pi
  cplx residue_res(int sigma, int r) const;
  cplx finite0(int eta, int sigma) const;           // (etabar/pi) sum_r Gamma_{r sigma} mu_r
  cplx finite0_res(int eta, int sigma, int r) const;

  const std::vector<double>& temps() const { return T_; }
  const std::vector<double>& path_weights() const { return b_; }

 private:
  double gamma_coupling(int sigma, int r) const;
  const ModelParams* p_;
  std::vector<double> T_;
  std::vector<double> b_;
};

}  // namespace tflow

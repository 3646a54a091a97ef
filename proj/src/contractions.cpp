#include "tflow/contractions.hpp"

#include <algorithm>
#include <cmath>

#include "tflow/errors.hpp"

namespace tflow {

namespace {
constexpr double kPi = 3.14159265358979323846;
// sinh overflows near x ~ 710; beyond that the contraction is identically zero
// to double precision anyway.
constexpr double kExpCutoff = 700.0;

// (x coth x - 1) / sinh x, the temperature-slash profile. Series for small x
// to avoid 0/0; the function rises from 0 like x/3 and decays like 2x e^-x.
double slash_profile(double x) {
  if (x <= 0.0) return 0.0;
  if (x > kExpCutoff) return 0.0;
  if (x < 1.0e-4) {
    // x coth x - 1 = x^2/3 - x^4/45 + ...; sinh x = x(1 + x^2/6 + ...)
    const double x2 = x * x;
    return (x / 3.0) * (1.0 - x2 * (7.0 / 30.0));
  }
  return (x / std::tanh(x) - 1.0) / std::sinh(x);
}
}  // namespace

TemperaturePath::TemperaturePath(std::vector<Row> rows) : rows_(std::move(rows)) {}

TemperaturePath TemperaturePath::table(std::vector<Row> rows) {
  if (rows.size() < 2) throw Error("temperature path needs at least two rows");
  const size_t nr = rows.front().T.size();
  if (nr == 0) throw Error("temperature path rows need at least one reservoir");
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].T.size() != nr) throw Error("temperature path rows have inconsistent arity");
    for (double T : rows[i].T)
      if (T < 0.0) throw Error("temperature path has negative temperature");
    if (i > 0 && !(rows[i].theta < rows[i - 1].theta))
      throw Error("temperature path theta must be strictly decreasing");
  }
  return TemperaturePath(std::move(rows));
}

TemperaturePath TemperaturePath::simultaneous(const ModelParams& p, double T_start,
                                              double T_floor) {
  if (!(T_start > T_floor) || T_floor < 0.0)
    throw Error("simultaneous path needs T_start > T_floor >= 0");
  // Breakpoints where some reservoir freezes out at its final temperature.
  std::vector<double> thetas{T_start, T_floor};
  for (const auto& r : p.reservoirs)
    if (r.T_final > T_floor && r.T_final < T_start) thetas.push_back(r.T_final);
  std::sort(thetas.rbegin(), thetas.rend());
  thetas.erase(std::unique(thetas.begin(), thetas.end()), thetas.end());
  std::vector<Row> rows;
  for (double th : thetas) {
    Row row{th, {}};
    for (const auto& r : p.reservoirs) row.T.push_back(std::max(th, r.T_final));
    rows.push_back(std::move(row));
  }
  return TemperaturePath(std::move(rows));
}

TemperaturePath TemperaturePath::sequential(const ModelParams& p, double T_start,
                                            double T_floor) {
  if (!(T_start > T_floor) || T_floor < 0.0)
    throw Error("sequential path needs T_start > T_floor >= 0");
  const int nr = static_cast<int>(p.reservoirs.size());
  // Each reservoir descends from T_start to max(T_final, T_floor) in its own
  // segment while the others hold. theta decreases by each segment's span.
  std::vector<Row> rows;
  std::vector<double> cur(nr, T_start);
  double theta = 0.0;  // filled after spans are known; build spans first
  std::vector<double> spans;
  for (int r = 0; r < nr; ++r)
    spans.push_back(T_start - std::max(p.reservoirs[r].T_final, T_floor));
  double total = 0.0;
  for (double s : spans) total += s;
  if (total <= 0.0) throw Error("sequential path has nothing to cool");
  theta = total;
  rows.push_back(Row{theta, cur});
  for (int r = 0; r < nr; ++r) {
    if (spans[r] <= 0.0) continue;
    theta -= spans[r];
    cur[r] = std::max(p.reservoirs[r].T_final, T_floor);
    rows.push_back(Row{theta, cur});
  }
  return TemperaturePath(std::move(rows));
}

std::vector<double> TemperaturePath::temps(double theta) const {
  if (rows_.empty()) throw Error("empty temperature path");
  const double hi = rows_.front().theta, lo = rows_.back().theta;
  const double th = std::clamp(theta, lo, hi);
  size_t seg = 0;
  while (seg + 2 < rows_.size() && th < rows_[seg + 1].theta) ++seg;
  // rows_[seg].theta >= th >= rows_[seg+1].theta (up to clamping)
  const auto& a = rows_[seg];
  const auto& b = rows_[seg + 1];
  const double den = a.theta - b.theta;
  const double w = den > 0.0 ? (a.theta - th) / den : 0.0;
  std::vector<double> T(a.T.size());
  for (size_t r = 0; r < T.size(); ++r) T[r] = a.T[r] + w * (b.T[r] - a.T[r]);
  return T;
}

std::vector<double> TemperaturePath::weights(double theta) const {
  if (rows_.empty()) throw Error("empty temperature path");
  const double hi = rows_.front().theta, lo = rows_.back().theta;
  const double th = std::clamp(theta, lo, hi);
  size_t seg = 0;
  while (seg + 2 < rows_.size() && th < rows_[seg + 1].theta) ++seg;
  const auto& a = rows_[seg];
  const auto& b = rows_[seg + 1];
  const double den = a.theta - b.theta;
  std::vector<double> w(a.T.size(), 0.0);
  if (den > 0.0)
    for (size_t r = 0; r < w.size(); ++r) w[r] = (a.T[r] - b.T[r]) / den;
  return w;
}

ContractionEval::ContractionEval(const ModelParams& p, std::vector<double> T,
                                 std::vector<double> b)
    : p_(&p), T_(std::move(T)), b_(std::move(b)) {
  if (T_.size() != p.reservoirs.size() || b_.size() != p.reservoirs.size())
    throw Error("contraction snapshot arity does not match reservoir count");
}

double ContractionEval::gamma_coupling(int sigma, int r) const {
  const auto& rr = p_->reservoirs[static_cast<size_t>(r)];
  return sigma == 0 ? rr.gamma_up : rr.gamma_dn;
}

cplx ContractionEval::gamma_res(int eta, int sigma, int r, double t) const {
  if (!(t > 0.0)) throw SingularTime("gamma requested at t <= 0; use the limit interface");
  const double g = gamma_coupling(sigma, r);
  if (g == 0.0) return 0.0;
  const double T = T_[static_cast<size_t>(r)];
  const double mu = p_->reservoirs[static_cast<size_t>(r)].mu;
  const double phase_arg = -eta * mu * t;  // etabar = -eta
  const cplx phase{std::cos(phase_arg), std::sin(phase_arg)};
  double env;
  if (T <= 0.0) {
    env = 1.0 / (kPi * t);
  } else {
    const double x = kPi * t * T;
    if (x > kExpCutoff) return 0.0;
    env = T / std::sinh(x);
  }
  return cplx(0.0, -1.0) * g * env * phase;
}

cplx ContractionEval::gamma(int eta, int sigma, double t) const {
  cplx s = 0.0;
  for (int r = 0; r < n_reservoirs(); ++r) s += gamma_res(eta, sigma, r, t);
  return s;
}

cplx ContractionEval::dgamma_res(int eta, int sigma, int r, double t) const {
  const double g = gamma_coupling(sigma, r);
  const double b = b_[static_cast<size_t>(r)];
  if (g == 0.0 || b == 0.0 || t <= 0.0) return 0.0;
  const double T = T_[static_cast<size_t>(r)];
  if (T <= 0.0) return 0.0;  // T = 0 is a fixed point of the slash
  const double x = kPi * t * T;
  const double prof = slash_profile(x);
  if (prof == 0.0) return 0.0;
  const double mu = p_->reservoirs[static_cast<size_t>(r)].mu;
  const double phase_arg = -eta * mu * t;
  const cplx phase{std::cos(phase_arg), std::sin(phase_arg)};
  return cplx(0.0, 1.0) * b * g * prof * phase;
}

cplx ContractionEval::dgamma(int eta, int sigma, double t) const {
  cplx s = 0.0;
  for (int r = 0; r < n_reservoirs(); ++r) s += dgamma_res(eta, sigma, r, t);
  return s;
}

cplx ContractionEval::residue(int sigma) const {
  return cplx(0.0, -p_->gamma_tot(sigma) / kPi);
}

cplx ContractionEval::residue_res(int sigma, int r) const {
  return cplx(0.0, -gamma_coupling(sigma, r) / kPi);
}

cplx ContractionEval::finite0(int eta, int sigma) const {
  return cplx(-eta * p_->gamma_mu_sum(sigma) / kPi, 0.0);
}

cplx ContractionEval::finite0_res(int eta, int sigma, int r) const {
  return cplx(-eta * gamma_coupling(sigma, r) * p_->reservoirs[static_cast<size_t>(r)].mu / kPi,
              0.0);
}

}  // namespace tflow

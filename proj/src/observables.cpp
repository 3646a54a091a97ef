#include "tflow/observables.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tflow/errors.hpp"

namespace tflow {

namespace {

constexpr double kPi = 3.14159265358979323846;

using EMat = Eigen::Matrix<cplx, kSDim, kSDim>;

EMat to_eigen(const SuperOp& s) {
  EMat m;
  for (int r = 0; r < kSDim; ++r)
    for (int c = 0; c < kSDim; ++c) m(r, c) = s(r, c);
  return m;
}

}  // namespace

LocalObservables local_observables(const SVec& rho) {
  LocalObservables o;
  const double p0 = rho[0].real();
  const double pu = rho[5].real();
  const double pd = rho[10].real();
  const double p2 = rho[15].real();
  o.n_up = pu + p2;
  o.n_dn = pd + p2;
  o.n_corr = p2;
  const double n = o.n_up + o.n_dn;
  o.fluct = n + 2.0 * o.n_corr - n * n;
  o.trace_re = p0 + pu + pd + p2;
  return o;
}

Mat4 initial_density(const std::string& name) {
  Mat4 rho;
  if (name == "empty") {
    rho(0, 0) = 1.0;
  } else if (name == "up") {
    rho(1, 1) = 1.0;
  } else if (name == "down") {
    rho(2, 2) = 1.0;
  } else if (name == "double") {
    rho(3, 3) = 1.0;
  } else if (name == "mixed") {
    for (int i = 0; i < kDim; ++i) rho(i, i) = 0.25;
  } else {
    throw ValidationError("unknown initial state '" + name + "'");
  }
  return rho;
}

std::vector<SVec> evolve_density(const GridFn1& pi, const Mat4& rho0) {
  const SVec r0 = vec(rho0);
  std::vector<SVec> out(static_cast<size_t>(pi.n()));
  for (int k = 0; k < pi.n(); ++k) out[static_cast<size_t>(k)] = apply(pi[k], r0);
  return out;
}

std::vector<double> current_series(const ModelParams& p, int r, const GridFn1& sigma_I,
                                   const std::vector<SVec>& rho) {
  const int n = sigma_I.n();
  if (static_cast<int>(rho.size()) != n) throw GridMismatch("current series length mismatch");
  const auto& res = p.reservoirs.at(static_cast<size_t>(r));
  const double dt = sigma_I.g.dt();
  const SCovec tau = trace_covector();
  std::vector<SCovec> y(static_cast<size_t>(n));
  for (int m = 0; m < n; ++m) y[static_cast<size_t>(m)] = apply(tau, sigma_I[m]);

  std::vector<double> out(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const LocalObservables o = local_observables(rho[static_cast<size_t>(k)]);
    double inst = res.gamma_up * (0.5 - o.n_up) + res.gamma_dn * (0.5 - o.n_dn);
    cplx mem = 0.0;
    if (k >= 1) {
      for (int j = 0; j <= k; ++j) {
        const double w = (j == 0 || j == k) ? 0.5 : 1.0;
        mem += w * dot(y[static_cast<size_t>(k - j)], rho[static_cast<size_t>(j)]);
      }
      mem *= cplx(0.0, -1.0) * dt;
    }
    out[static_cast<size_t>(k)] = inst + mem.real();
  }
  return out;
}

PlateauValue stationary_extract(const std::vector<double>& series, const TimeGrid& g) {
  if (static_cast<int>(series.size()) != g.n) throw GridMismatch("series length mismatch");
  const int klo = static_cast<int>(std::floor(0.60 * (g.n - 1)));
  const int khi = static_cast<int>(std::floor(0.95 * (g.n - 1)));
  PlateauValue pv;
  if (khi - klo < 3) {
    pv.value = series.back();
    pv.drift = 0.0;
    return pv;
  }
  // least squares a + b (t - t_mid) over the window
  double sw = 0.0, st = 0.0, stt = 0.0, sy = 0.0, sty = 0.0;
  const double tmid = 0.5 * (g.t(klo) + g.t(khi));
  for (int k = klo; k <= khi; ++k) {
    const double x = g.t(k) - tmid;
    sw += 1.0;
    st += x;
    stt += x * x;
    sy += series[static_cast<size_t>(k)];
    sty += x * series[static_cast<size_t>(k)];
  }
  const double det = sw * stt - st * st;
  const double a = (stt * sy - st * sty) / det;
  const double b = (sw * sty - st * sy) / det;
  pv.value = a;
  pv.drift = std::abs(b) * (g.t(khi) - g.t(klo));
  return pv;
}

CPDiagnostics cp_trace_hermiticity(const SuperOp& pi_t) {
  CPDiagnostics d;
  // Choi reshuffle: C[4a+i, 4b+j] = Pi[(a+4b), (i+4j)]
  EMat C;
  for (int a = 0; a < kDim; ++a)
    for (int i = 0; i < kDim; ++i)
      for (int b = 0; b < kDim; ++b)
        for (int j = 0; j < kDim; ++j)
          C(4 * a + i, 4 * b + j) = pi_t(a + 4 * b, i + 4 * j);
  const EMat Ch = C.adjoint();
  d.herm_defect = (C - Ch).cwiseAbs().maxCoeff();
  const EMat H = 0.5 * (C + Ch);
  Eigen::SelfAdjointEigenSolver<EMat> es(H);
  d.choi_min = es.eigenvalues().minCoeff();

  const SCovec tau = trace_covector();
  const SCovec tp = apply(tau, pi_t);
  double terr = 0.0;
  for (int i = 0; i < kSDim; ++i) terr = std::max(terr, std::abs(tp[i] - tau[i]));
  d.trace_err = terr;
  return d;
}

SVec fixed_point_state(const SuperOp& pi_t) {
  Eigen::ComplexEigenSolver<EMat> es(to_eigen(pi_t));
  if (es.info() != Eigen::Success) throw SingularSolve("propagator eigendecomposition failed");
  int best = 0;
  double bestd = 1.0e300;
  for (int i = 0; i < kSDim; ++i) {
    const double d = std::abs(es.eigenvalues()(i) - cplx(1.0));
    if (d < bestd) {
      bestd = d;
      best = i;
    }
  }
  SVec v;
  for (int i = 0; i < kSDim; ++i) v[i] = es.eigenvectors()(i, best);
  const SCovec tau = trace_covector();
  const cplx tr = dot(tau, v);
  if (std::abs(tr) < 1.0e-12) throw SingularSolve("fixed point state has vanishing trace");
  for (int i = 0; i < kSDim; ++i) v[i] /= tr;
  return v;
}

double analytic_current_highT(const ModelParams& p, int r, double T) {
  double out = 0.0;
  const auto& rr = p.reservoirs.at(static_cast<size_t>(r));
  for (int sigma = 0; sigma < 2; ++sigma) {
    const double g = sigma == 0 ? rr.gamma_up : rr.gamma_dn;
    const double gtot = p.gamma_tot(sigma);
    if (gtot == 0.0) continue;
    out += g / (4.0 * T) * (rr.mu - p.gamma_mu_sum(sigma) / gtot);
  }
  return out;
}

double analytic_fluct_highT(double eps, double U, double T) {
  return 0.5 * (1.0 - (4.0 * eps + 3.0 * U) / (4.0 * T));
}

SuperOp quartic_dpi_coefficient(const ModelParams& p, int r, double T_r) {
  const auto& F = fields();
  const auto& rr = p.reservoirs.at(static_cast<size_t>(r));
  const SuperOp L = l_infty(p);
  SuperOp out;
  SuperOp tmp;
  for (int so = 0; so < kNSO; ++so) {
    const auto u = so_unpack(so);
    const double g = u.sigma == 0 ? rr.gamma_up : rr.gamma_dn;
    if (g == 0.0) continue;
    SuperOp term = F.plus(so) * L;
    matmul(tmp, term, F.plus(so_bar(so)));
    term = tmp;
    matmul(tmp, F.plus(so), F.plus(so_bar(so)));
    axpy(term, cplx(u.eta * rr.mu), tmp);
    axpy(out, g, term);
  }
  out *= -(kPi / 36.0) * T_r;
  return out;
}

double noninteracting_occupation(const ModelParams& p, int sigma, double n0, double t) {
  const double gam = p.gamma_tot(sigma);
  const double eps = p.epsilon;
  double n = n0 * std::exp(-gam * t);
  if (t == 0.0) return n0;
  double scale0 = std::max({gam, std::abs(eps), 1.0});
  for (const auto& r : p.reservoirs) scale0 = std::max(scale0, std::abs(r.mu));
  const double a = 0.5 * gam;
  const double emg = std::exp(-gam * t), emg2 = std::exp(-0.5 * gam * t);

  auto lorentz_weight = [&](double x) {
    // |e^{-i omega t} - e^{-i eps t - gam t / 2}|^2 / ((omega-eps)^2 + gam^2/4)
    return (1.0 + emg - 2.0 * emg2 * std::cos(x * t)) / (x * x + a * a);
  };
  // the quadrature step has to resolve both the resonance and the cos(x t)
  // oscillation; the window grows with T, so the node count must follow it
  const double h_target = std::min(a, kPi / std::max(t, 1.0)) / 8.0;

  for (const auto& r : p.reservoirs) {
    const double g = sigma == 0 ? r.gamma_up : r.gamma_dn;
    if (g == 0.0) continue;
    double acc = 0.0;
    if (r.T_final <= 0.0) {
      // sharp Fermi edge: integrate exactly over (-inf, mu], window below
      const double W = 60.0 * scale0;
      const double lo = eps - W;
      const double hi = r.mu;
      if (hi > lo) {
        const int N = 200000;
        const double h = (hi - lo) / N;
        for (int k = 0; k <= N; ++k) {
          const double w = (k == 0 || k == N) ? 0.5 : 1.0;
          acc += w * lorentz_weight(lo + k * h - eps);
        }
        acc *= h;
        // monotone part of the tail below the window
        acc += (1.0 + emg) * (kPi / 2.0 - std::atan(W / a)) / a;
      } else {
        // the whole filled band sits below the window
        acc += (1.0 + emg) * (kPi / 2.0 - std::atan((eps - r.mu) / a)) / a;
      }
    } else if (r.T_final > 1.0e3 * scale0) {
      // Fermi function flat across the resonance: closed form, the cosine
      // integral against the Lorentzian is (pi/a) e^{-a t}
      const double fE = 1.0 / (std::exp((eps - r.mu) / r.T_final) + 1.0);
      acc = fE * (kPi / a) * (1.0 - emg);
    } else {
      const double W = 60.0 * std::max(scale0, r.T_final);
      const double lo = eps - W, hi = eps + W;
      const int N = static_cast<int>(std::clamp((hi - lo) / h_target, 4.0e5, 8.0e6));
      const double h = (hi - lo) / N;
      for (int k = 0; k <= N; ++k) {
        const double w = (k == 0 || k == N) ? 0.5 : 1.0;
        const double om = lo + k * h;
        const double f = 1.0 / (std::exp(std::clamp((om - r.mu) / r.T_final, -700.0, 700.0)) + 1.0);
        acc += w * f * lorentz_weight(om - eps);
      }
      acc *= h;
      acc += (1.0 + emg) * (kPi / 2.0 - std::atan(W / a)) / a;  // f ~ 1 below the window
    }
    n += g * acc / (2.0 * kPi);
  }
  return n;
}

}  // namespace tflow

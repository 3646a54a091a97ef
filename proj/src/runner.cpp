#include "tflow/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <nlohmann/json.hpp>

#include "tflow/config.hpp"
#include "tflow/dump.hpp"
#include "tflow/errors.hpp"
#include "tflow/observables.hpp"

namespace tflow {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, p);
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int map_error(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 2;
  if (dynamic_cast<const ValidationError*>(&e)) return 1;
  return 3;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_csv(const std::string& path, const RunConfig& cfg, const FlowResult& fr) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "T,t,n_up,n_down,n_corr,fluct,I_L,I_R,choi_min,trace_err\n";
  const Mat4 rho0 = initial_density(cfg.initial_state);
  const int nres = static_cast<int>(cfg.model.reservoirs.size());
  for (const Snapshot& snap : fr.snapshots) {
    const auto rho = evolve_density(snap.pi, rho0);
    std::vector<std::vector<double>> cur;
    for (int r = 0; r < nres && r < 2; ++r)
      cur.push_back(current_series(cfg.model, r, snap.sigma_I[static_cast<size_t>(r)], rho));
    for (int k = 0; k < snap.pi.n(); ++k) {
      const LocalObservables o = local_observables(rho[static_cast<size_t>(k)]);
      const CPDiagnostics d = cp_trace_hermiticity(snap.pi[k]);
      const double il = cur.size() > 0 ? cur[0][static_cast<size_t>(k)] : 0.0;
      const double ir = cur.size() > 1 ? cur[1][static_cast<size_t>(k)] : 0.0;
      out << fmt(snap.theta) << ',' << fmt(snap.pi.g.t(k)) << ',' << fmt(o.n_up) << ','
          << fmt(o.n_dn) << ',' << fmt(o.n_corr) << ',' << fmt(o.fluct) << ',' << fmt(il) << ','
          << fmt(ir) << ',' << fmt(d.choi_min) << ',' << fmt(d.trace_err) << '\n';
    }
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

// worst deviation of the snapshot's occupations from the exact U = 0 result,
// probed on a few grid nodes per spin
double u0_oracle_deviation(const RunConfig& cfg, const Snapshot& snap) {
  ModelParams q = cfg.model;
  for (size_t i = 0; i < q.reservoirs.size() && i < snap.temps.size(); ++i)
    q.reservoirs[i].T_final = snap.temps[i];
  const Mat4 rho0 = initial_density(cfg.initial_state);
  const LocalObservables o0 = local_observables(vec(rho0));
  const auto rho = evolve_density(snap.pi, rho0);
  double worst = 0.0;
  const int n = snap.pi.n();
  for (int j = 1; j <= 8; ++j) {
    const int k = (n - 1) * j / 8;
    const LocalObservables o = local_observables(rho[static_cast<size_t>(k)]);
    const double t = snap.pi.g.t(k);
    worst = std::max(worst, std::abs(o.n_up - noninteracting_occupation(q, 0, o0.n_up, t)));
    worst = std::max(worst, std::abs(o.n_dn - noninteracting_occupation(q, 1, o0.n_dn, t)));
  }
  return worst;
}

void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& config_text, const FlowResult& fr,
                    const std::vector<std::string>& kernel_files) {
  nlohmann::json j;
  j["format"] = "tflow-run-manifest";
  j["version"] = 1;
  j["config_fnv1a64"] = hex64(fnv1a64(config_text));
  j["reservoirs"] = cfg.reservoir_names;
  j["grid"] = {{"t_max", cfg.grid.t_max}, {"n", cfg.grid.n}};
  j["vertex_grid"] = {{"n_v", cfg.vertex.v.n}, {"n_w", cfg.vertex.w.n}};
  j["stepper"] = {{"tol", cfg.stepper.tol}, {"dtheta_init", cfg.stepper.dtheta_init}};
  j["path_kind"] = cfg.path_kind;
  j["initial_state"] = cfg.initial_state;
  j["record_temperatures"] = cfg.record_temperatures;
  int accepted = 0;
  for (const auto& s : fr.steps)
    if (s.accepted) ++accepted;
  j["steps_attempted"] = fr.steps.size();
  j["steps_accepted"] = accepted;
  j["rhs_evaluations"] = fr.n_rhs;
  j["snapshots"] = fr.snapshots.size();
  j["final_theta"] = fr.final_state.theta;
  j["kernel_files"] = kernel_files;
  j["csv_columns"] = "T,t,n_up,n_down,n_corr,fluct,I_L,I_R,choi_min,trace_err";
  if (cfg.model.U == 0.0 && !fr.snapshots.empty()) {
    const double dev = u0_oracle_deviation(cfg, fr.snapshots.back());
    j["u0_oracle"] = {{"max_occupation_dev", dev}, {"tol", 1.0e-3}, {"pass", dev <= 1.0e-3}};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

FlowResult run_from_config(const RunConfig& cfg) {
  const TemperaturePath path = cfg.make_path();
  return run_flow(cfg.model, path, cfg.grid, cfg.vertex, cfg.stepper,
                  cfg.record_temperatures);
}

}  // namespace

int cmd_run(const RunnerOptions& opt) {
  try {
    if (opt.threads < 1) throw ValidationError("--threads must be at least 1");
    const std::string text = read_file(opt.config_path);
    const RunConfig cfg = parse_config(text);
    const FlowResult fr = run_from_config(cfg);

    std::filesystem::create_directories(opt.out_dir);
    write_csv(opt.out_dir + "/observables.csv", cfg, fr);
    // One dump per requested record temperature; the cold-end snapshot is
    // dumped only when it was itself requested.
    std::vector<std::string> kernel_files;
    for (const Snapshot& snap : fr.snapshots) {
      const bool requested =
          std::any_of(cfg.record_temperatures.begin(), cfg.record_temperatures.end(),
                      [&](double th) {
                        return std::abs(snap.theta - th) <= 1e-9 * std::max(1.0, std::abs(th));
                      });
      if (!requested) continue;
      const std::string name = "kernel_T" + fmt(snap.theta) + ".tflk";
      write_kernel_file(opt.out_dir + "/" + name, snap);
      kernel_files.push_back(name);
    }
    write_manifest(opt.out_dir + "/manifest.json", cfg, text, fr, kernel_files);
    if (!opt.kernel_out.empty()) write_kernel_file(opt.kernel_out, fr.snapshots.back());

    if (!opt.quiet) {
      const Mat4 rho0 = initial_density(cfg.initial_state);
      for (const Snapshot& snap : fr.snapshots) {
        const auto rho = evolve_density(snap.pi, rho0);
        std::vector<double> series_n(rho.size());
        for (size_t k = 0; k < rho.size(); ++k)
          series_n[k] = local_observables(rho[k]).n_up + local_observables(rho[k]).n_dn;
        const PlateauValue n_st = stationary_extract(series_n, snap.pi.g);
        std::cout << "theta=" << fmt(snap.theta) << " n=" << fmt(n_st.value);
        if (!snap.sigma_I.empty()) {
          const auto cur = current_series(cfg.model, 0, snap.sigma_I[0], rho);
          std::cout << " I[0]=" << fmt(stationary_extract(cur, snap.pi.g).value);
        }
        std::cout << "\n";
      }
      std::cout << "wrote " << opt.out_dir << "/observables.csv (" << fr.snapshots.size()
                << " temperatures, " << fr.n_rhs << " rhs evaluations)\n";
    }
    return 0;
  } catch (const std::exception& e) {
    return map_error(e);
  }
}

namespace {

// One printed line per check.  "pass"/"fail" compare measured against the
// tolerance; "skipped" means the config cannot exercise the check at all
// (e.g. the flow never reaches the cold regime), which is not a failure.
struct CheckLine {
  bool failed = false;
  void report(const char* name, bool ok, double measured, double tol) {
    std::cout << "check " << name << ": " << (ok ? "pass" : "fail")
              << " measured=" << fmt(measured) << " tol=" << fmt(tol) << "\n";
    if (!ok) failed = true;
  }
  void skip(const char* name, const char* why) {
    std::cout << "check " << name << ": skipped (" << why << ")\n";
  }
};

}  // namespace

int cmd_validate(const std::string& config_path) {
  try {
    const RunConfig cfg = parse_config(read_file(config_path));
    const TemperaturePath path = cfg.make_path();
    std::cout << "config OK: " << cfg.model.reservoirs.size() << " reservoirs, flow "
              << fmt(path.theta_start()) << " -> " << fmt(path.theta_end()) << "\n";

    const FlowResult fr = run_from_config(cfg);
    CheckLine out;

    double choi_min = 0.0, trace_err = 0.0;
    for (const Snapshot& snap : fr.snapshots)
      for (int k = 0; k < snap.pi.n(); ++k) {
        const CPDiagnostics d = cp_trace_hermiticity(snap.pi[k]);
        choi_min = std::min(choi_min, d.choi_min);
        trace_err = std::max(trace_err, d.trace_err);
      }
    out.report("cp", choi_min >= -1.0e-8, choi_min, -1.0e-8);
    out.report("trace", trace_err <= 1.0e-8, trace_err, 1.0e-8);

    // Fixed point: the kernel drift of the last accepted step, relative to
    // the drift when the flow crossed theta ~ 1.  Only meaningful when the
    // flow actually spans hot-to-cold.
    if (path.theta_end() > 0.02 || path.theta_start() < 1.0) {
      out.skip("fixed_point", "flow does not reach the cold regime");
    } else {
      double ref = 0.0, fin = 0.0, best_gap = 1e300;
      for (const StepRecord& s : fr.steps) {
        if (!s.accepted) continue;
        fin = s.dsigma_norm;
        const double gap = std::abs(s.theta - 1.0);
        if (gap < best_gap) {
          best_gap = gap;
          ref = s.dsigma_norm;
        }
      }
      if (ref <= 0.0) {
        out.skip("fixed_point", "no accepted steps near theta=1");
      } else {
        out.report("fixed_point", fin <= 0.05 * ref, fin / ref, 0.05);
      }
    }

    // Analytic limits need a genuinely hot recorded temperature.
    const Snapshot* hot = fr.snapshots.empty() ? nullptr : &fr.snapshots.front();
    const double t_hot =
        (hot && !hot->temps.empty()) ? *std::min_element(hot->temps.begin(), hot->temps.end())
                                     : 0.0;
    if (!hot || t_hot < 20.0) {
      out.skip("highT_current", "no recorded temperature above 20");
      out.skip("highT_fluct", "no recorded temperature above 20");
    } else {
      const Mat4 rho0 = initial_density(cfg.initial_state);
      const auto rho = evolve_density(hot->pi, rho0);
      const auto cur = current_series(cfg.model, 0, hot->sigma_I[0], rho);
      const double i_meas = stationary_extract(cur, hot->pi.g).value;
      const double i_ref = analytic_current_highT(cfg.model, 0, t_hot);
      const double i_tol = std::max(0.1 * std::abs(i_ref), 2.0e-4);
      out.report("highT_current", std::abs(i_meas - i_ref) <= i_tol, i_meas - i_ref, i_tol);

      std::vector<double> fl(rho.size());
      for (size_t k = 0; k < rho.size(); ++k) fl[k] = local_observables(rho[k]).fluct;
      const double f_meas = stationary_extract(fl, hot->pi.g).value;
      const double f_ref = analytic_fluct_highT(cfg.model.epsilon, cfg.model.U, t_hot);
      const double f_tol = std::max(0.1 * std::abs(f_ref), 2.0e-4);
      out.report("highT_fluct", std::abs(f_meas - f_ref) <= f_tol, f_meas - f_ref, f_tol);
    }

    if (cfg.model.U != 0.0 || fr.snapshots.empty()) {
      out.skip("u0_oracle", "model is interacting");
    } else {
      const double dev = u0_oracle_deviation(cfg, fr.snapshots.back());
      out.report("u0_oracle", dev <= 1.0e-3, dev, 1.0e-3);
    }

    return out.failed ? 1 : 0;
  } catch (const std::exception& e) {
    return map_error(e);
  }
}

int cmd_dump_kernel(const std::string& config_path, const std::string& out_path, bool quiet) {
  try {
    const RunConfig cfg = parse_config(read_file(config_path));
    const FlowResult fr = run_from_config(cfg);
    write_kernel_file(out_path, fr.snapshots.back());
    if (!quiet) std::cout << "wrote " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    return map_error(e);
  }
}

int cmd_load_kernel(const std::string& kernel_path) {
  try {
    const Snapshot s = read_kernel_file(kernel_path);
    std::cout << "theta=" << fmt(s.theta) << " reservoirs=" << s.temps.size()
              << " grid: n=" << s.sigma.g.n << " t_max=" << fmt(s.sigma.g.t_max) << "\n";
    std::cout << "sup|sigma|=" << fmt(s.sigma.sup_norm()) << " sup|pi|=" << fmt(s.pi.sup_norm())
              << "\n";
    const CPDiagnostics d = cp_trace_hermiticity(s.pi[s.pi.n() - 1]);
    std::cout << "choi_min=" << fmt(d.choi_min) << " trace_err=" << fmt(d.trace_err) << "\n";
    return 0;
  } catch (const std::exception& e) {
    return map_error(e);
  }
}

}  // namespace tflow

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "meanflow/config.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/format.hpp"
#include "meanflow/io.hpp"
#include "meanflow/stationary.hpp"
#include "meanflow/verify.hpp"

namespace meanflow {

inline int exit_code_for(FlowStatus status) {
  switch (status) {
    case FlowStatus::Converged:
      return 0;
    case FlowStatus::MaxTimeReached:
      return 2;
    case FlowStatus::Blowup:
    case FlowStatus::StepUnderflow:
      return 3;
  }
  return 3;
}

namespace detail {

inline void write_series_csv(const std::filesystem::path& path,
                             const std::vector<DiagnosticsRecord>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << csv_header() << "\n";
  for (const auto& rec : series) out << to_csv_row(rec) << "\n";
  if (!out.flush()) throw ConfigError("failed writing " + path.string());
}

// Least-squares slope of ln(dissipation) against t over the final half of
// the series; NaN when fewer than four usable records exist.
inline double dissipation_decay_exponent(
    const std::vector<DiagnosticsRecord>& series) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = series.size() / 2; i < series.size(); ++i) {
    if (series[i].dissipation > 0.0) {
      pts.emplace_back(series[i].t, std::log(series[i].dissipation));
    }
  }
  if (pts.size() < 4) return std::numeric_limits<double>::quiet_NaN();
  double tm = 0.0, lm = 0.0;
  for (const auto& [t, l] : pts) {
    tm += t;
    lm += l;
  }
  tm /= pts.size();
  lm /= pts.size();
  double num = 0.0, den = 0.0;
  for (const auto& [t, l] : pts) {
    num += (t - tm) * (l - lm);
    den += (t - tm) * (t - tm);
  }
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / den;
}

// Runs the flow for one config and writes series.csv, snap_NNN.dat,
// final.dat, and report.txt into dir.
inline FlowResult execute_run(const ExperimentConfig& cfg,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FlowRunner runner(cfg.flow);
  const FlowResult result = runner.run();

  write_series_csv(dir / "series.csv", result.series);
  for (std::size_t i = 0; i < result.snapshots.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "snap_%03zu.dat", i);
    write_snapshot((dir / name).string(), runner.mesh(), result.snapshots[i].first,
                   result.snapshots[i].second);
  }
  write_snapshot((dir / "final.dat").string(), runner.mesh(), result.state.t,
                 result.state.u);

  double drift = 0.0;
  for (const auto& rec : result.series) {
    drift = std::max(drift, std::fabs(rec.mass / result.state.a0 - 1.0));
  }
  const int k = runner.orbit_k();
  const double rho_over = cfg.flow.rho / (8.0 * kPi);
  const auto& last = result.series.back();

  std::ofstream rep(dir / "report.txt", std::ios::binary);
  if (!rep) throw ConfigError("cannot open report.txt for writing");
  rep << "status " << to_string(result.status) << "\n"
      << "final_residual " << format_g17(last.residual) << "\n"
      << "k_min " << k << "\n"
      << "rho_over_8pi " << format_g17(rho_over) << "\n"
      << "hypothesis_orbit_gt_rho_over_8pi "
      << (static_cast<double>(k) > rho_over ? "true" : "false") << "\n"
      << "mass_drift_max_rel " << format_g17(drift) << "\n"
      << "energy_violations " << result.energy_violations << "\n"
      << "step_count " << result.state.step_count << "\n"
      << "reject_count " << result.state.reject_count << "\n"
      << "dissipation_decay_exponent "
      << format_g17(dissipation_decay_exponent(result.series)) << "\n"
      << "final_concentration_fraction " << format_g17(last.conc_frac) << "\n";
  if (!rep.flush()) throw ConfigError("failed writing report.txt");
  return result;
}

}  // namespace detail

inline int cmd_run(const ExperimentConfig& cfg) {
  try {
    const FlowResult result =
        detail::execute_run(cfg, std::filesystem::path(cfg.output_dir));
    return exit_code_for(result.status);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_stationary(const ExperimentConfig& cfg) {
  try {
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const MeshGeometry mesh = build_mesh(cfg.flow.mesh);
    const Field f = materialize(mesh, cfg.flow.f_expr);
    const Field u0 = materialize(mesh, cfg.flow.u0_expr);
    NewtonReport report;
    const Field w = newton_solve(mesh, cfg.newton, f, u0, &report);
    write_snapshot((dir / "stationary.dat").string(), mesh, 0.0, w);
    std::ofstream rep(dir / "report.txt", std::ios::binary);
    rep << "iterations " << report.iterations << " final_residual "
        << format_g17(report.final_residual) << "\n";
    if (!rep.flush()) throw ConfigError("failed writing report.txt");
    return 0;
  } catch (const NoConvergence& e) {
    std::cerr << "stationary solve did not converge (residual "
              << format_g17(e.final_residual()) << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stationary failed: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_verify(const ExperimentConfig& cfg) {
  try {
    const MeshGeometry mesh = build_mesh(cfg.flow.mesh);
    const auto results = run_verification(mesh, cfg.flow.rho, cfg.flow.f_expr);
    bool all = true;
    for (const auto& r : results) {
      std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << "  " << r.detail
                << "\n";
      if (!r.pass && all) {
        all = false;
        std::cerr << "verification failed at check '" << r.name << "'\n";
      }
    }
    return all ? 0 : 4;
  } catch (const std::exception& e) {
    std::cerr << "verify failed: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_sweep(const ExperimentConfig& cfg,
                     const std::vector<double>& rho_list) {
  if (rho_list.empty()) {
    std::cerr << "sweep requires a nonempty rho list (--rho a,b,c)\n";
    return 1;
  }
  struct Row {
    std::string status = "error";
    double final_residual = std::numeric_limits<double>::quiet_NaN();
    double max_h1 = std::numeric_limits<double>::quiet_NaN();
    double wall_time = 0.0;
    bool completed = false;
  };
  std::vector<Row> rows(rho_list.size());
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= rho_list.size()) return;
      ExperimentConfig sub = cfg;
      sub.flow.rho = rho_list[i];
      sub.newton.rho_target = rho_list[i];
      const auto start = std::chrono::steady_clock::now();
      Row& row = rows[i];
      try {
        const FlowResult result = detail::execute_run(
            sub, dir / ("rho_" + format_g17(rho_list[i])));
        row.status = to_string(result.status);
        row.final_residual = result.series.back().residual;
        row.max_h1 = 0.0;
        for (const auto& rec : result.series) {
          row.max_h1 = std::max(row.max_h1, rec.h1);
        }
        row.completed = true;
      } catch (const std::exception& e) {
        std::cerr << "sweep entry rho=" << format_g17(rho_list[i])
                  << " failed: " << e.what() << "\n";
      }
      row.wall_time = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    }
  };

  const unsigned hw = std::thread::hardware_concurrency();
  const std::size_t pool = std::min<std::size_t>(
      rho_list.size(), hw == 0 ? 1 : static_cast<std::size_t>(hw));
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < pool; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  std::ofstream out(dir / "sweep.csv", std::ios::binary);
  if (!out) {
    std::cerr << "cannot open sweep.csv for writing\n";
    return 1;
  }
  out << "rho,status,final_residual,max_h1,wall_time\n";
  bool all = true;
  for (std::size_t i = 0; i < rho_list.size(); ++i) {
    const Row& row = rows[i];
    out << format_g17(rho_list[i]) << "," << row.status << ","
        << format_g17(row.final_residual) << "," << format_g17(row.max_h1) << ","
        << format_g17(row.wall_time) << "\n";
    all = all && row.completed;
  }
  if (!out.flush()) {
    std::cerr << "failed writing sweep.csv\n";
    return 1;
  }
  return all ? 0 : 1;
}

}  // namespace meanflow

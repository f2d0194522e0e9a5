#pragma once

#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "meanflow/diagnostics.hpp"
#include "meanflow/fieldexpr.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/mesh.hpp"
#include "meanflow/operators.hpp"
#include "meanflow/symmetry.hpp"

namespace meanflow {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string brief(double value, double tol) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e (tol %.3e)", value, tol);
  return buf;
}

inline Field verification_noise(const MeshGeometry& mesh, std::mt19937& rng,
                                double amp) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  Field u = mesh.make_field();
  for (auto& v : u.values) v = dist(rng);
  return u;
}

}  // namespace detail

// Runs the operator and flow consistency checks on the given geometry at the
// given coupling and weight. Check order is fixed; the first row is the one
// a corrupted mesh trips. A check that throws is recorded as a failure so the
// rest of the table still runs.
inline std::vector<CheckResult> run_verification(const MeshGeometry& mesh,
                                                 double rho,
                                                 const FieldExpr& f_expr) {
  std::vector<CheckResult> results;
  std::mt19937 rng(20260816);
  DifferentialOps ops(mesh);
  const Field f = materialize(mesh, f_expr);
  validate_positive_weight(mesh, f);
  const std::size_t n = static_cast<std::size_t>(mesh.node_count());

  auto check = [&results](const char* name, auto&& body) {
    CheckResult r{name, false, ""};
    try {
      body(r);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  };

  check("self_adjointness", [&](CheckResult& r) {
    const Field a = detail::verification_noise(mesh, rng, 0.5);
    const Field b = detail::verification_noise(mesh, rng, 0.5);
    Field la = mesh.make_field(), lb = mesh.make_field();
    ops.laplacian(a.values.data(), la.values.data());
    ops.laplacian(b.values.data(), lb.values.data());
    double alb = 0.0, bla = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      alb += mesh.quad_weights[i] * a.values[i] * lb.values[i];
      bla += mesh.quad_weights[i] * b.values[i] * la.values[i];
    }
    const double defect = std::fabs(alb - bla);
    const double tol = 1e-10 * l2_norm(mesh, a) * l2_norm(mesh, b);
    r.pass = defect <= tol;
    r.detail = detail::brief(defect, tol);
  });

  check("operator_accuracy", [&](CheckResult& r) {
    double err = 0.0, tol = 0.0;
    if (mesh.kind == MeshKind::Torus) {
      tol = 1e-10;
      const std::vector<std::pair<int, int>> modes = {
          {1, 0}, {0, 1}, {3, 2}, {mesh.n1 / 2 - 1, mesh.n1 / 2 - 1}};
      for (const auto& [m, k] : modes) {
        Field u = mesh.make_field();
        for (std::size_t i = 0; i < n; ++i) {
          u.values[i] =
              std::cos(m * mesh.coord1[i]) * std::cos(k * mesh.coord2[i]);
        }
        Field lap = mesh.make_field();
        ops.laplacian(u.values.data(), lap.values.data());
        const double lambda = static_cast<double>(m) * m + static_cast<double>(k) * k;
        for (std::size_t i = 0; i < n; ++i) {
          err = std::max(err, std::fabs(lap.values[i] + lambda * u.values[i]));
        }
      }
    } else {
      const double scale = 64.0 / mesh.n1;
      tol = 5e-3 * scale * scale;
      Field u = mesh.make_field();
      for (std::size_t i = 0; i < n; ++i) u.values[i] = std::cos(mesh.coord1[i]);
      Field lap = mesh.make_field();
      ops.laplacian(u.values.data(), lap.values.data());
      for (std::size_t i = 0; i < n; ++i) {
        err = std::max(err, std::fabs(lap.values[i] + 2.0 * u.values[i]));
      }
    }
    r.pass = err <= tol;
    r.detail = detail::brief(err, tol);
  });

  check("quadrature_volume", [&](CheckResult& r) {
    double wsum = 0.0, wmin = mesh.quad_weights[0];
    for (std::size_t i = 0; i < n; ++i) {
      wsum += mesh.quad_weights[i];
      wmin = std::min(wmin, mesh.quad_weights[i]);
    }
    const double analytic =
        mesh.kind == MeshKind::Torus ? 4.0 * kPi * kPi : 4.0 * kPi;
    const double internal = std::fabs(wsum / mesh.volume - 1.0);
    const double surface = std::fabs(wsum / analytic - 1.0);
    const double surface_tol = mesh.kind == MeshKind::Torus ? 1e-12 : 5e-2;
    r.pass = wmin > 0.0 && internal <= 1e-12 && surface <= surface_tol;
    r.detail = detail::brief(surface, surface_tol);
  });

  check("gradient_consistency", [&](CheckResult& r) {
    const double eps = 1e-6;
    double worst = 0.0;
    for (int pair = 0; pair < 3; ++pair) {
      const Field u = detail::verification_noise(mesh, rng, 0.3);
      const Field v = detail::verification_noise(mesh, rng, 0.3);
      Field up = u, dn = u;
      for (std::size_t i = 0; i < n; ++i) {
        up.values[i] += eps * v.values[i];
        dn.values[i] -= eps * v.values[i];
      }
      const double fd =
          (energy(ops, rho, f, up) - energy(ops, rho, f, dn)) / (2.0 * eps);
      const Field res = residual_field(ops, rho, f, u);
      double analytic = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        analytic -= mesh.quad_weights[i] * res.values[i] * v.values[i];
      }
      worst = std::max(worst,
                       std::fabs(fd - analytic) / std::max(1e-30, std::fabs(analytic)));
    }
    r.pass = worst <= 1e-5;
    r.detail = detail::brief(worst, 1e-5);
  });

  check("equivariance", [&](CheckResult& r) {
    const auto gens = mesh.kind == MeshKind::Torus
                          ? parse_generators("shift(" +
                                             std::to_string(mesh.n1 / 2) + ",0)")
                          : parse_generators("antipodal");
    const GroupAction action = build_group(mesh, gens);
    const auto& sigma = action.elements[1];
    const Field u = detail::verification_noise(mesh, rng, 0.5);
    Field pu = mesh.make_field();
    for (std::size_t i = 0; i < n; ++i) pu.values[i] = u.values[sigma[i]];
    Field lap = mesh.make_field(), plap = mesh.make_field();
    ops.laplacian(u.values.data(), lap.values.data());
    ops.laplacian(pu.values.data(), plap.values.data());
    double defect = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      defect = std::max(defect,
                        std::fabs(plap.values[i] - lap.values[sigma[i]]));
      scale = std::max(scale, std::fabs(lap.values[i]));
    }
    const double rel = defect / std::max(1.0, scale);
    r.pass = rel <= 1e-11;
    r.detail = detail::brief(rel, 1e-11);
  });

  check("dissipation_identity", [&](CheckResult& r) {
    FlowConfig cfg;
    cfg.mesh = MeshSpec{mesh.kind, mesh.n1, mesh.n2};
    cfg.rho = rho;
    cfg.f_expr = f_expr;
    cfg.u0_expr = parse_expr(mesh.kind == MeshKind::Torus
                                 ? "0.3*cos(x) + 0.2*cos(y)"
                                 : "0.3*cos(theta)");
    cfg.residual_tol = 1e-14;
    cfg.record_every = 1;
    FlowRunner probe(mesh, cfg);
    const double dt = probe.stability_ceiling(probe.initial_state()) / 10.0;
    cfg.dt_init = cfg.dt_min = cfg.dt_max = dt;
    cfg.t_max = 60.0 * dt;
    FlowRunner runner(mesh, cfg);
    const FlowResult res = runner.run();

    double worst = 0.0;
    const bool usable = res.series.size() > 10 && res.state.reject_count == 0;
    if (usable) {
      const std::size_t count = res.series.size();
      const std::size_t lo = count / 10, hi = count - count / 10;
      for (std::size_t i = std::max<std::size_t>(lo, 1); i + 1 < hi; ++i) {
        const auto& a = res.series[i - 1];
        const auto& b = res.series[i];
        const auto& c = res.series[i + 1];
        const double fd = (c.energy - a.energy) / (c.t - a.t);
        worst = std::max(worst, std::fabs(fd + b.dissipation) /
                                    std::max(1e-30, b.dissipation));
      }
    }
    r.pass = usable && worst <= 1e-2;
    r.detail = usable ? detail::brief(worst, 1e-2)
                      : "run rejected steps or recorded too little";
  });

  return results;
}

}  // namespace meanflow

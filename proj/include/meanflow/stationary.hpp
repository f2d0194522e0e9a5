#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "meanflow/diagnostics.hpp"
#include "meanflow/errors.hpp"
#include "meanflow/mesh.hpp"
#include "meanflow/operators.hpp"

namespace meanflow {

struct NewtonConfig {
  double rho_target = 0.0;
  int rho_continuation_steps = 8;
  double newton_tol = 1e-10;
  int max_iters = 50;
  double damping = 0.5;
  double linear_tol = 1e-10;
};

inline void validate(const NewtonConfig& cfg) {
  if (cfg.rho_continuation_steps < 1) {
    throw ConfigError("rho_continuation_steps must be at least 1");
  }
  if (!(cfg.newton_tol > 0.0)) throw ConfigError("newton_tol must be positive");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (!(cfg.damping > 0.0 && cfg.damping < 1.0)) {
    throw ConfigError("damping must lie in (0,1)");
  }
  if (!(cfg.linear_tol > 0.0)) throw ConfigError("linear_tol must be positive");
}

struct NewtonReport {
  int iterations = 0;  // Newton steps summed over the continuation ramp
  double final_residual = 0.0;
};

namespace detail {

// Restarted GMRES in the quadrature-weighted L2 inner product. apply_op
// writes the operator applied to its first argument into its second. x holds
// the initial guess on entry and the solution on exit. Returns the relative
// residual reached; a stagnated return above rel_tol leaves the best iterate
// in x so the caller's line search can still use it as an inexact direction.
template <typename Apply>
inline double gmres(const MeshGeometry& mesh, Apply&& apply_op,
                    const std::vector<double>& b, std::vector<double>& x,
                    double rel_tol, int restart, int max_applies) {
  const std::size_t n = b.size();
  const auto& qw = mesh.quad_weights;
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += qw[i] * a[i] * c[i];
    return s;
  };
  auto norm = [&](const std::vector<double>& a) { return std::sqrt(dot(a, a)); };

  const double bnorm = norm(b);
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    return 0.0;
  }

  const int m = restart;
  std::vector<std::vector<double>> basis(m + 1, std::vector<double>(n));
  std::vector<double> hess((m + 1) * m, 0.0);
  auto h = [&](int i, int j) -> double& { return hess[i + j * (m + 1)]; };
  std::vector<double> cs(m), sn(m), g(m + 1), y(m);
  std::vector<double> r(n), work(n);

  int applied = 0;
  double rel = 1.0;
  while (true) {
    apply_op(x, r);
    ++applied;
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    const double rnorm = norm(r);
    rel = rnorm / bnorm;
    if (rel <= rel_tol || applied >= max_applies) return rel;

    for (std::size_t i = 0; i < n; ++i) basis[0][i] = r[i] / rnorm;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = rnorm;

    int cols = 0;
    for (int j = 0; j < m && applied < max_applies; ++j) {
      apply_op(basis[j], work);
      ++applied;
      for (int i = 0; i <= j; ++i) {
        h(i, j) = dot(work, basis[i]);
        for (std::size_t p = 0; p < n; ++p) work[p] -= h(i, j) * basis[i][p];
      }
      h(j + 1, j) = norm(work);
      const bool breakdown = h(j + 1, j) <= 1e-14 * bnorm;
      if (!breakdown) {
        for (std::size_t p = 0; p < n; ++p) basis[j + 1][p] = work[p] / h(j + 1, j);
      }
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
        h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
        h(i, j) = t;
      }
      const double denom = std::hypot(h(j, j), h(j + 1, j));
      cs[j] = denom == 0.0 ? 1.0 : h(j, j) / denom;
      sn[j] = denom == 0.0 ? 0.0 : h(j + 1, j) / denom;
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      cols = j + 1;
      if (std::fabs(g[j + 1]) / bnorm <= rel_tol || breakdown) break;
    }
    if (cols == 0) return rel;  // operator budget exhausted mid-restart

    for (int i = cols - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < cols; ++k) s -= h(i, k) * y[k];
      y[i] = s / h(i, i);
    }
    for (int i = 0; i < cols; ++i) {
      for (std::size_t p = 0; p < n; ++p) x[p] += y[i] * basis[i][p];
    }
  }
}

// Linearization applied to v with the normalized density q = f e^w / s
// precomputed, s = integral f e^w dV: J[v] = Lap v + rho (q v - q <q, v>).
inline void jacobian_into(const MeshGeometry& mesh, const DifferentialOps& ops,
                          double rho, const std::vector<double>& q,
                          const std::vector<double>& v, std::vector<double>& lap,
                          std::vector<double>& out) {
  const std::size_t n = v.size();
  ops.laplacian(v.data(), lap.data());
  double inner = 0.0;
  for (std::size_t i = 0; i < n; ++i) inner += mesh.quad_weights[i] * q[i] * v[i];
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lap[i] + rho * (q[i] * v[i] - q[i] * inner);
  }
}

}  // namespace detail

// Normalized density f e^w / integral(f e^w) dV, evaluated in shifted form.
inline std::vector<double> normalized_density(const MeshGeometry& mesh,
                                              const Field& f, const Field& w) {
  const double lm = log_integral_f_exp(mesh, f, w);
  std::vector<double> q(w.values.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::exp(std::log(f.values[i]) + w.values[i] - lm);
  }
  return q;
}

// Matrix-free directional derivative of the stationarity residual at w.
inline Field jacobian_apply(const MeshGeometry& mesh, const DifferentialOps& ops,
                            double rho, const Field& f, const Field& w,
                            const Field& v) {
  check_field(mesh, w, "jacobian_apply");
  check_field(mesh, v, "jacobian_apply");
  const std::vector<double> q = normalized_density(mesh, f, w);
  std::vector<double> lap(q.size());
  Field out = mesh.make_field();
  detail::jacobian_into(mesh, ops, rho, q, v.values, lap, out.values);
  return out;
}

// Damped Newton iteration for the stationarity equation in the mean-zero
// gauge, with continuation in rho and a Krylov inner solve. The torus uses
// the exact spectral inverse Laplacian as the left preconditioner, the
// sphere the Laplacian diagonal; both are followed by a mean-zero projection
// so the Krylov space stays in the gauge.
inline Field newton_solve(const MeshGeometry& mesh, const NewtonConfig& cfg,
                          const Field& f, const Field& u_init,
                          NewtonReport* report = nullptr) {
  validate(cfg);
  check_field(mesh, f, "newton_solve");
  check_field(mesh, u_init, "newton_solve");
  validate_positive_weight(mesh, f);
  for (double v : u_init.values) {
    if (!std::isfinite(v)) throw ConfigError("newton_solve: u_init must be finite");
  }

  constexpr int kRestart = 60;
  constexpr int kMaxApplies = 600;
  constexpr double kArmijoSlope = 1e-4;
  constexpr double kMinLineStep = 1e-10;

  DifferentialOps ops(mesh);
  const std::size_t n = static_cast<std::size_t>(mesh.node_count());
  const auto& qw = mesh.quad_weights;

  Field w = u_init;
  {
    const double mean = mean_value(mesh, w);
    for (auto& v : w.values) v -= mean;
  }

  std::vector<double> q(n), lap(n), jv(n), rhs(n), dir(n);
  Field precond_in = mesh.make_field();
  Field trial = mesh.make_field();

  auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
    if (mesh.kind == MeshKind::Torus) {
      precond_in.values = in;
      out = ops.poisson_zero_mean(precond_in).values;
    } else {
      const auto& diag = ops.laplacian_diagonal();
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] / diag[i];
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += qw[i] * out[i];
    mean /= mesh.volume;
    for (std::size_t i = 0; i < n; ++i) out[i] -= mean;
  };

  NewtonReport rep;
  double rho = 0.0;

  auto solve_at_rho = [&]() {
    Field residual = residual_field(ops, rho, f, w);
    double rnorm = l2_norm(mesh, residual);
    for (int iter = 0;; ++iter) {
      if (rnorm <= cfg.newton_tol) return;
      if (iter == cfg.max_iters) {
        throw NoConvergence("Newton iteration budget exhausted", rnorm);
      }

      q = normalized_density(mesh, f, w);

      auto apply_jacobian = [&](const std::vector<double>& v,
                                std::vector<double>& out) {
        detail::jacobian_into(mesh, ops, rho, q, v, lap, jv);
        precondition(jv, out);
      };

      for (std::size_t i = 0; i < n; ++i) jv[i] = -residual.values[i];
      precondition(jv, rhs);
      std::fill(dir.begin(), dir.end(), 0.0);
      detail::gmres(mesh, apply_jacobian, rhs, dir, cfg.linear_tol, kRestart,
                    kMaxApplies);

      double s = 1.0;
      while (true) {
        for (std::size_t i = 0; i < n; ++i) {
          trial.values[i] = w.values[i] + s * dir[i];
        }
        Field trial_residual = residual_field(ops, rho, f, trial);
        const double trial_norm = l2_norm(mesh, trial_residual);
        if (trial_norm <= (1.0 - kArmijoSlope * s) * rnorm) {
          w.values = trial.values;
          residual = std::move(trial_residual);
          rnorm = trial_norm;
          break;
        }
        s *= cfg.damping;
        if (s < kMinLineStep) {
          throw NoConvergence("Newton line search failed", rnorm);
        }
      }
      const double mean = mean_value(mesh, w);
      for (auto& v : w.values) v -= mean;
      ++rep.iterations;
    }
  };

  for (int stage = 1; stage <= cfg.rho_continuation_steps; ++stage) {
    rho = cfg.rho_target * stage / cfg.rho_continuation_steps;
    solve_at_rho();
  }

  rep.final_residual = residual_norm(ops, cfg.rho_target, f, w);
  if (report) *report = rep;
  return w;
}

}  // namespace meanflow

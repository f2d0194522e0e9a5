#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/format.hpp"
#include "meanflow/mesh.hpp"
#include "meanflow/operators.hpp"

namespace meanflow {

// log integral exp(u) dV, evaluated in shifted form so it stays finite for
// |u| up to the flow's blow-up guard.
inline double log_integral_exp(const MeshGeometry& mesh, const Field& u) {
  check_field(mesh, u, "log_integral_exp");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * std::exp(u.values[i] - m);
  }
  return m + std::log(s);
}

// log integral f exp(u) dV for strictly positive f.
inline double log_integral_f_exp(const MeshGeometry& mesh, const Field& f,
                                 const Field& u) {
  check_field(mesh, f, "log_integral_f_exp");
  check_field(mesh, u, "log_integral_f_exp");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * f.values[i] * std::exp(u.values[i] - m);
  }
  return m + std::log(s);
}

// Additive shift of u so integral e^u dV hits the target mass. The
// stationarity residual is invariant under this shift.
inline Field gauge_align(const MeshGeometry& mesh, const Field& u,
                         double target_mass) {
  if (!(target_mass > 0.0)) throw ConfigError("gauge target mass must be positive");
  const double c = std::log(target_mass) - log_integral_exp(mesh, u);
  Field out = u;
  for (auto& v : out.values) v += c;
  return out;
}

inline void validate_positive_weight(const MeshGeometry& mesh, const Field& f) {
  check_field(mesh, f, "validate_positive_weight");
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (!(f.values[i] > 0.0)) {
      throw ConfigError("weight function must be strictly positive, violated at node " +
                        std::to_string(i));
    }
  }
}

// E_f(u) = 1/2 integral |grad u|^2 + (rho/|M|) integral u - rho log integral f e^u
inline double energy(const DifferentialOps& ops, double rho, const Field& f,
                     const Field& u) {
  const MeshGeometry& mesh = ops.mesh();
  return 0.5 * ops.dirichlet_energy(u) + rho / mesh.volume * integrate(mesh, u) -
         rho * log_integral_f_exp(mesh, f, u);
}

// Stationarity defect Lap u + rho (f e^u / integral(f e^u) - 1/|M|), written
// into out. lap_u must already hold Lap u.
inline void residual_from_laplacian(const MeshGeometry& mesh, double rho,
                                    const Field& f, const Field& u,
                                    const Field& lap_u, Field& out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * f.values[i] * std::exp(u.values[i] - m);
  }
  const double inv_vol = 1.0 / mesh.volume;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    const double fe = f.values[i] * std::exp(u.values[i] - m) / s;
    out.values[i] = lap_u.values[i] + rho * (fe - inv_vol);
  }
}

inline Field residual_field(const DifferentialOps& ops, double rho,
                            const Field& f, const Field& u) {
  const Field lap_u = ops.laplacian(u);
  Field out = ops.mesh().make_field();
  residual_from_laplacian(ops.mesh(), rho, f, u, lap_u, out);
  return out;
}

inline double residual_norm(const DifferentialOps& ops, double rho,
                            const Field& f, const Field& u) {
  return l2_norm(ops.mesh(), residual_field(ops, rho, f, u));
}

// Volume-form gradient-flow velocity du/dt = e^{-u}(Lap u - rho/|M|)
// + rho f / integral(f e^u), written into out. Satisfies
// e^u * velocity == residual pointwise.
inline void flow_velocity_from_laplacian(const MeshGeometry& mesh, double rho,
                                         const Field& f, const Field& u,
                                         const Field& lap_u, Field& out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : u.values) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * f.values[i] * std::exp(u.values[i] - m);
  }
  const double rho_over_vol = rho / mesh.volume;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    out.values[i] = std::exp(-u.values[i]) * (lap_u.values[i] - rho_over_vol) +
                    rho * f.values[i] * std::exp(-m) / s;
  }
}

inline Field flow_velocity(const DifferentialOps& ops, double rho,
                           const Field& f, const Field& u) {
  const Field lap_u = ops.laplacian(u);
  Field out = ops.mesh().make_field();
  flow_velocity_from_laplacian(ops.mesh(), rho, f, u, lap_u, out);
  return out;
}

// Dissipation y = integral (du/dt)^2 e^u dV of the velocity field.
inline double dissipation(const MeshGeometry& mesh, const Field& velocity,
                          const Field& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * velocity.values[i] * velocity.values[i] *
         std::exp(u.values[i]);
  }
  return s;
}

// Left side log integral e^{u - mean(u)} of the sharpened trace inequality.
inline double mt_lhs(const MeshGeometry& mesh, const Field& u) {
  const double mean = integrate(mesh, u) / mesh.volume;
  return log_integral_exp(mesh, u) - mean;
}

// Gap of the sharpened inequality at orbit cardinality k:
// log integral e^{u-mean} - dirichlet(u)/(16 k pi). Positive gap means slack.
inline double mt_gap(const DifferentialOps& ops, const Field& u, int k) {
  if (k < 1) throw ConfigError("orbit cardinality k must be >= 1");
  return mt_lhs(ops.mesh(), u) -
         ops.dirichlet_energy(u) / (16.0 * static_cast<double>(k) * kPi);
}

// Sliding-window mass scanner: finds the geodesic ball of a fixed radius
// holding the largest share of integral e^u. Precomputes per-row angular
// half-widths once, then answers scans with circular prefix sums, O(rows)
// per candidate center instead of O(nodes).
class BallScanner {
 public:
  BallScanner(const MeshGeometry& mesh, double radius)
      : mesh_(&mesh), radius_(radius) {
    if (!(radius > 0.0) || radius >= mesh.injectivity_radius) {
      throw ConfigError("ball radius must lie in (0, injectivity_radius)");
    }
    if (mesh.kind == MeshKind::Torus) {
      const int n = mesh.n1;
      const double h = 2.0 * kPi / n;
      halfw_.assign(static_cast<std::size_t>(n), -1);
      for (int o = 0; o < n; ++o) {
        const double dy = std::min(o, n - o) * h;
        int hw = -1;
        for (int dx = 0; dx <= n / 2; ++dx) {
          const double ddx = std::min(dx, n - dx) * h;
          if (std::sqrt(ddx * ddx + dy * dy) <= radius) hw = dx;
          else break;
        }
        halfw_[static_cast<std::size_t>(o)] = hw;
      }
    } else {
      const int nt = mesh.n1, np = mesh.n2;
      halfw_.assign(static_cast<std::size_t>(nt) * nt, -1);
      for (int jc = 0; jc < nt; ++jc) {
        const int center = jc * np;
        for (int j = 0; j < nt; ++j) {
          int hw = -1;
          for (int di = 0; di <= np / 2; ++di) {
            if (geodesic_distance(mesh, center, j * np + di) <= radius) hw = di;
            else break;
          }
          halfw_[static_cast<std::size_t>(jc) * nt + j] = hw;
        }
      }
    }
  }

  struct Result {
    int center = 0;
    double fraction = 0.0;
  };

  // Largest fraction of integral e^u captured by a ball of the scanner's
  // radius, over all node-centered balls. Ties resolve to the smallest
  // center index.
  Result densest_ball(const Field& u) const {
    const MeshGeometry& mesh = *mesh_;
    check_field(mesh, u, "densest_ball");
    const int rows = mesh.n1;
    const int cols = mesh.kind == MeshKind::Torus ? mesh.n1 : mesh.n2;
    double m = -std::numeric_limits<double>::infinity();
    for (double v : u.values) m = std::max(m, v);

    // circular prefix sums of w*e^{u-m} per grid row
    std::vector<double> prefix(static_cast<std::size_t>(rows) * (cols + 1), 0.0);
    std::vector<double> row_total(static_cast<std::size_t>(rows), 0.0);
    double total = 0.0;
    for (int j = 0; j < rows; ++j) {
      double* p = prefix.data() + static_cast<std::size_t>(j) * (cols + 1);
      for (int i = 0; i < cols; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * cols + i;
        p[i + 1] = p[i] + mesh.quad_weights[idx] * std::exp(u.values[idx] - m);
      }
      row_total[static_cast<std::size_t>(j)] = p[cols];
      total += p[cols];
    }

    auto window = [&](int row, int center, int hw) -> double {
      if (hw < 0) return 0.0;
      if (2 * hw + 1 >= cols) return row_total[static_cast<std::size_t>(row)];
      const double* p = prefix.data() + static_cast<std::size_t>(row) * (cols + 1);
      const int a = ((center - hw) % cols + cols) % cols;
      const int b = ((center + hw) % cols + cols) % cols;
      if (a <= b) return p[b + 1] - p[a];
      return row_total[static_cast<std::size_t>(row)] - (p[a] - p[b + 1]);
    };

    Result best;
    best.fraction = -1.0;
    for (int jc = 0; jc < rows; ++jc) {
      const int* hw_row = nullptr;
      if (mesh.kind == MeshKind::Torus) {
        // halfw_ indexed by row offset; resolved inside the loop below
      } else {
        hw_row = halfw_.data() + static_cast<std::size_t>(jc) * rows;
      }
      for (int ic = 0; ic < cols; ++ic) {
        double s = 0.0;
        for (int j = 0; j < rows; ++j) {
          const int hw = mesh.kind == MeshKind::Torus
                             ? halfw_[static_cast<std::size_t>(((j - jc) % rows + rows) % rows)]
                             : hw_row[j];
          s += window(j, ic, hw);
        }
        const double frac = s / total;
        if (frac > best.fraction) {
          best.fraction = frac;
          best.center = jc * cols + ic;
        }
      }
    }
    return best;
  }

 private:
  const MeshGeometry* mesh_;
  double radius_;
  std::vector<int> halfw_;
};

// Best mass-concentrating ball of the given radius: center node and the
// fraction of integral e^u it holds.
inline BallScanner::Result concentration_ball(const MeshGeometry& mesh,
                                              const Field& u, double radius) {
  return BallScanner(mesh, radius).densest_ball(u);
}

inline double concentration_fraction(const MeshGeometry& mesh, const Field& u,
                                     double radius) {
  return concentration_ball(mesh, u, radius).fraction;
}

// Centered bubble profile ln(lam^2 / (1 + lam^2 d^2)^2), mean-normalized.
// The multi-center overload splits the mass evenly across centers in the
// exponential domain.
inline Field make_bubble(const MeshGeometry& mesh, std::span<const int> centers,
                         double lam) {
  if (!(lam >= 1.0)) throw ConfigError("bubble parameter lam must be >= 1");
  if (centers.empty()) throw ConfigError("make_bubble needs at least one center");
  for (int c : centers) {
    if (c < 0 || c >= mesh.node_count()) {
      throw ConfigError("bubble center node out of range");
    }
  }
  Field u = mesh.make_field();
  const double log_lam2 = 2.0 * std::log(lam);
  const double log_inv_k = -std::log(static_cast<double>(centers.size()));
  std::vector<double> terms(centers.size());
  for (int idx = 0; idx < mesh.node_count(); ++idx) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = geodesic_distance(mesh, idx, centers[c]);
      terms[c] = log_lam2 - 2.0 * std::log1p(lam * lam * d * d);
      m = std::max(m, terms[c]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    u[idx] = log_inv_k + m + std::log(s);
  }
  const double mean = integrate(mesh, u) / mesh.volume;
  for (auto& v : u.values) v -= mean;
  return u;
}

inline Field make_bubble(const MeshGeometry& mesh, int center, double lam) {
  const int c[1] = {center};
  return make_bubble(mesh, std::span<const int>(c, 1), lam);
}

// One row of the flow's time series.
struct DiagnosticsRecord {
  double t = 0.0;
  double mass = 0.0;        // integral e^u
  double energy = 0.0;      // E_f
  double dissipation = 0.0; // integral (du/dt)^2 e^u
  double residual = 0.0;    // L2 norm of the stationarity defect
  double mean = 0.0;        // integral u / |M|
  double h1 = 0.0;          // integral |grad u|^2
  double h2 = 0.0;          // integral (Lap u)^2
  double u_min = 0.0;
  double u_max = 0.0;
  double mt_gap = 0.0;      // slack of the sharpened inequality at k
  double conc_frac = 0.0;   // densest-ball mass share at radius i(M)/4
};

inline const char* csv_header() {
  return "t,mass,energy,dissipation,residual,mean,h1,h2,umin,umax,mtgap,confrac";
}

inline std::string to_csv_row(const DiagnosticsRecord& r) {
  std::string out;
  const double cols[12] = {r.t,    r.mass, r.energy, r.dissipation,
                           r.residual, r.mean, r.h1,     r.h2,
                           r.u_min, r.u_max, r.mt_gap, r.conc_frac};
  for (int i = 0; i < 12; ++i) {
    if (i) out += ',';
    out += format_g17(cols[i]);
  }
  return out;
}

// Core record assembly sharing one Laplacian application across residual,
// velocity, and h2.
inline DiagnosticsRecord build_record(const DifferentialOps& ops,
                                      const BallScanner& scanner, double rho,
                                      const Field& f, double t, const Field& u,
                                      int k) {
  const MeshGeometry& mesh = ops.mesh();
  DiagnosticsRecord r;
  r.t = t;

  const Field lap_u = ops.laplacian(u);
  Field work = mesh.make_field();
  residual_from_laplacian(mesh, rho, f, u, lap_u, work);
  r.residual = l2_norm(mesh, work);
  flow_velocity_from_laplacian(mesh, rho, f, u, lap_u, work);
  r.dissipation = dissipation(mesh, work, u);

  r.mass = std::exp(log_integral_exp(mesh, u));
  r.energy = energy(ops, rho, f, u);
  r.mean = integrate(mesh, u) / mesh.volume;
  r.h1 = ops.dirichlet_energy(u);
  r.h2 = l2_norm(mesh, lap_u);
  r.h2 *= r.h2;
  r.u_min = *std::min_element(u.values.begin(), u.values.end());
  r.u_max = *std::max_element(u.values.begin(), u.values.end());
  r.mt_gap = mt_lhs(mesh, u) - r.h1 / (16.0 * static_cast<double>(k) * kPi);
  r.conc_frac = scanner.densest_ball(u).fraction;
  return r;
}

// Convenience wrapper building the operator workspace and scanner per call.
inline DiagnosticsRecord sobolev_record(const MeshGeometry& mesh, double rho,
                                        const Field& f, double t, const Field& u,
                                        int k = 1) {
  const DifferentialOps ops(mesh);
  const BallScanner scanner(mesh, mesh.injectivity_radius / 4.0);
  return build_record(ops, scanner, rho, f, t, u, k);
}

}  // namespace meanflow

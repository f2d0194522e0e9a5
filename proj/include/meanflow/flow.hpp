#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "meanflow/diagnostics.hpp"
#include "meanflow/errors.hpp"
#include "meanflow/fieldexpr.hpp"
#include "meanflow/mesh.hpp"
#include "meanflow/operators.hpp"
#include "meanflow/symmetry.hpp"

namespace meanflow {

enum class FlowStatus { Converged, MaxTimeReached, Blowup, StepUnderflow };

inline std::string to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::Converged: return "Converged";
    case FlowStatus::MaxTimeReached: return "MaxTimeReached";
    case FlowStatus::Blowup: return "Blowup";
    case FlowStatus::StepUnderflow: return "StepUnderflow";
  }
  return "unknown";
}

struct FlowConfig {
  MeshSpec mesh{MeshKind::Torus, 64, 64};
  double rho = 0.0;
  FieldExpr f_expr = parse_expr("1");
  FieldExpr u0_expr = parse_expr("0");
  std::vector<GeneratorSpec> group;  // empty: no symmetry group

  double dt_init = 1e-3;
  double dt_min = 1e-12;
  double dt_max = 1.0;
  double cfl_safety = 0.9;
  double residual_tol = 1e-8;
  double t_max = 200.0;
  int record_every = 10;
  int snapshot_every = 0;  // 0: only the final snapshot
  bool symmetrize_each_step = false;
  bool mass_project_each_step = true;
};

inline void validate(const FlowConfig& cfg) {
  if (!std::isfinite(cfg.rho)) throw ConfigError("rho must be finite");
  if (!(cfg.dt_min > 0.0) || !(cfg.dt_init >= cfg.dt_min) || !(cfg.dt_max >= cfg.dt_init)) {
    throw ConfigError("time steps must satisfy 0 < dt_min <= dt_init <= dt_max");
  }
  if (!(cfg.cfl_safety > 0.0) || cfg.cfl_safety > 1.0) {
    throw ConfigError("cfl_safety must lie in (0, 1]");
  }
  if (!(cfg.residual_tol > 0.0)) throw ConfigError("residual_tol must be positive");
  if (!(cfg.t_max > 0.0)) throw ConfigError("t_max must be positive");
  if (cfg.record_every < 1) throw ConfigError("record_every must be >= 1");
  if (cfg.snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
}

struct FlowState {
  double t = 0.0;
  double dt = 0.0;
  double a0 = 0.0;  // conserved volume integral of e^u
  Field u;
  long step_count = 0;
  long reject_count = 0;
};

struct FlowResult {
  FlowStatus status = FlowStatus::MaxTimeReached;
  FlowState state;
  std::vector<DiagnosticsRecord> series;
  std::vector<std::pair<double, Field>> snapshots;
  long energy_violations = 0;  // accepted steps that raised E_f beyond tolerance
};

// Volume-form gradient flow driver: classical RK4 with step rejection on
// energy increase, mass drift, or non-finite values. Owns the mesh, the
// operator workspace, the materialized weight f, and the optional symmetry
// group for the whole run.
class FlowRunner {
 public:
  static constexpr double kEnergyIncreaseTol = 1e-10;  // scaled by 1+|E_f|
  static constexpr double kMassDriftTol = 1e-6;        // per-step, pre-projection
  static constexpr double kRk4StabilitySpan = 2.8;     // |z| reach of RK4 on the negative axis
  static constexpr double kBlowupGuard = 700.0;        // max |u| before exp overflow
  static constexpr int kGrowAfterAccepts = 10;
  static constexpr double kGrowFactor = 1.2;

  explicit FlowRunner(const FlowConfig& cfg) : FlowRunner(build_mesh(cfg.mesh), cfg) {}

  // Runs on a caller-supplied geometry instead of building one from the
  // config's mesh spec (which must still match in kind and size).
  FlowRunner(const MeshGeometry& mesh, const FlowConfig& cfg)
      : cfg_(cfg),
        mesh_(mesh),
        ops_(mesh_),
        scanner_(mesh_, mesh_.injectivity_radius / 4.0),
        f_(materialize(mesh_, cfg.f_expr)) {
    if (!(mesh_.tag() == MeshTag{cfg.mesh.kind, cfg.mesh.n1, cfg.mesh.n2})) {
      throw ContractViolation("FlowRunner: mesh does not match the config spec");
    }
    validate(cfg_);
    validate_positive_weight(mesh_, f_);
    if (!cfg.group.empty()) {
      group_.emplace(build_group(mesh_, cfg.group));
    }
    k_ = group_ ? group_->k_min : 1;
    lap_buf_ = mesh_.make_field();
    vel_[0] = mesh_.make_field();
    vel_[1] = mesh_.make_field();
    vel_[2] = mesh_.make_field();
    vel_[3] = mesh_.make_field();
    stage_ = mesh_.make_field();
    trial_ = mesh_.make_field();
  }

  const MeshGeometry& mesh() const { return mesh_; }
  const DifferentialOps& ops() const { return ops_; }
  const Field& weight() const { return f_; }
  const GroupAction* group() const { return group_ ? &*group_ : nullptr; }
  int orbit_k() const { return k_; }

  // Largest stable step at the current state: cfl * span / |lambda_max of
  // the linearized operator|, where the e^{-u} factor rescales the stiffest
  // node.
  double stability_ceiling(const Field& u) const {
    double umin = u.values[0];
    for (double v : u.values) umin = std::min(umin, v);
    return cfg_.cfl_safety * kRk4StabilitySpan /
           (ops_.lap_eig_max() * std::exp(-umin));
  }

  Field initial_state() const {
    Field u = materialize(mesh_, cfg_.u0_expr);
    if (cfg_.symmetrize_each_step && group_) {
      u = symmetrize(mesh_, *group_, u);
    }
    return u;
  }

  // One accept/reject cycle. Advances state on success; returns false when
  // dt underflows dt_min before any step is accepted. The energies of the
  // last accepted transition stay readable through last_step_energies so
  // callers can audit monotonicity instead of trusting the rejection path.
  bool step(FlowState& s) {
    const double log_mass_prev = log_integral_exp(mesh_, s.u);
    const double e_prev = energy(ops_, cfg_.rho, f_, s.u);
    const double log_a0 = std::log(s.a0);

    for (;;) {
      if (s.dt < cfg_.dt_min) return false;

      rk4_trial(s.u, s.dt);

      bool ok = true;
      for (double v : trial_.values) {
        if (!std::isfinite(v)) {
          ok = false;
          break;
        }
      }

      if (ok) {
        const double log_mass_trial = log_integral_exp(mesh_, trial_);
        const double drift = std::fabs(std::expm1(log_mass_trial - log_mass_prev));
        if (drift > kMassDriftTol) {
          ok = false;
        } else if (cfg_.mass_project_each_step) {
          const double c = log_a0 - log_mass_trial;
          for (auto& v : trial_.values) v += c;
        }
      }

      if (ok && cfg_.symmetrize_each_step && group_) {
        trial_ = symmetrize(mesh_, *group_, trial_);
      }

      double e_trial = 0.0;
      if (ok) {
        e_trial = energy(ops_, cfg_.rho, f_, trial_);
        const double bound = e_prev + kEnergyIncreaseTol * (1.0 + std::fabs(e_prev));
        if (!(e_trial <= bound)) ok = false;
      }

      if (!ok) {
        s.dt *= 0.5;
        ++s.reject_count;
        consecutive_accepts_ = 0;
        continue;
      }

      last_e_prev_ = e_prev;
      last_e_accepted_ = e_trial;
      std::swap(s.u.values, trial_.values);
      s.t += s.dt;
      ++s.step_count;
      if (++consecutive_accepts_ >= kGrowAfterAccepts) {
        consecutive_accepts_ = 0;
        s.dt = std::min({s.dt * kGrowFactor, cfg_.dt_max, stability_ceiling(s.u)});
      }
      return true;
    }
  }

  DiagnosticsRecord record(double t, const Field& u) const {
    return build_record(ops_, scanner_, cfg_.rho, f_, t, u, k_);
  }

  // Energies across the most recent accepted step: (before, after).
  std::pair<double, double> last_step_energies() const {
    return {last_e_prev_, last_e_accepted_};
  }

  bool last_step_violated_energy() const {
    return last_e_accepted_ >
           last_e_prev_ + kEnergyIncreaseTol * (1.0 + std::fabs(last_e_prev_));
  }

  FlowResult run() {
    FlowResult result;
    FlowState s;
    s.u = initial_state();
    s.t = 0.0;
    s.dt = cfg_.dt_init;
    s.a0 = std::exp(log_integral_exp(mesh_, s.u));
    consecutive_accepts_ = 0;

    result.series.push_back(record(s.t, s.u));
    if (cfg_.snapshot_every > 0) {
      result.snapshots.emplace_back(s.t, s.u);
    }

    for (;;) {
      const double res = residual_norm(ops_, cfg_.rho, f_, s.u);
      if (res <= cfg_.residual_tol) {
        result.status = FlowStatus::Converged;
        break;
      }
      if (s.t >= cfg_.t_max) {
        result.status = FlowStatus::MaxTimeReached;
        break;
      }
      if (linf_norm(s.u) > kBlowupGuard) {
        result.status = FlowStatus::Blowup;
        break;
      }
      if (!step(s)) {
        result.status = FlowStatus::StepUnderflow;
        break;
      }
      if (last_step_violated_energy()) ++result.energy_violations;
      if (s.step_count % cfg_.record_every == 0) {
        result.series.push_back(record(s.t, s.u));
      }
      if (cfg_.snapshot_every > 0 && s.step_count % cfg_.snapshot_every == 0) {
        result.snapshots.emplace_back(s.t, s.u);
      }
    }

    if (result.series.empty() || result.series.back().t != s.t) {
      result.series.push_back(record(s.t, s.u));
    }
    if (result.snapshots.empty() || result.snapshots.back().first != s.t) {
      result.snapshots.emplace_back(s.t, s.u);
    }
    result.state = std::move(s);
    return result;
  }

 private:
  void rk4_trial(const Field& u, double dt) {
    const std::size_t n = u.values.size();
    velocity(u, vel_[0]);
    for (std::size_t i = 0; i < n; ++i) {
      stage_.values[i] = u.values[i] + 0.5 * dt * vel_[0].values[i];
    }
    velocity(stage_, vel_[1]);
    for (std::size_t i = 0; i < n; ++i) {
      stage_.values[i] = u.values[i] + 0.5 * dt * vel_[1].values[i];
    }
    velocity(stage_, vel_[2]);
    for (std::size_t i = 0; i < n; ++i) {
      stage_.values[i] = u.values[i] + dt * vel_[2].values[i];
    }
    velocity(stage_, vel_[3]);
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < n; ++i) {
      trial_.values[i] = u.values[i] +
                         w * (vel_[0].values[i] + 2.0 * vel_[1].values[i] +
                              2.0 * vel_[2].values[i] + vel_[3].values[i]);
    }
  }

  void velocity(const Field& u, Field& out) {
    ops_.laplacian(u.values.data(), lap_buf_.values.data());
    flow_velocity_from_laplacian(mesh_, cfg_.rho, f_, u, lap_buf_, out);
  }

  FlowConfig cfg_;
  MeshGeometry mesh_;
  DifferentialOps ops_;
  BallScanner scanner_;
  Field f_;
  std::optional<GroupAction> group_;
  int k_ = 1;
  int consecutive_accepts_ = 0;
  double last_e_prev_ = 0.0;
  double last_e_accepted_ = 0.0;
  Field lap_buf_, stage_, trial_;
  Field vel_[4];
};

inline FlowResult run_flow(const FlowConfig& cfg) { return FlowRunner(cfg).run(); }

}  // namespace meanflow

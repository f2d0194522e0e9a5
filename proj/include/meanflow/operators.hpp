#pragma once

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/mesh.hpp"

namespace meanflow {

inline double l2_norm(const MeshGeometry& mesh, const Field& u) {
  check_field(mesh, u, "l2_norm");
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    s += mesh.quad_weights[i] * u.values[i] * u.values[i];
  }
  return std::sqrt(s);
}

inline double linf_norm(const Field& u) {
  double m = 0.0;
  for (double v : u.values) m = std::max(m, std::fabs(v));
  return m;
}

namespace detail {

// FFTW's planner mutates global state; plan creation and destruction must be
// serialized even though plan execution on distinct buffers is thread-safe.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Spectral workspace for one torus resolution: r2c/c2r plans plus buffers.
// One instance per thread of use; execution reuses the owned buffers.
class TorusSpectral {
 public:
  explicit TorusSpectral(int n) : n_(n), nc_(n / 2 + 1) {
    real_ = fftw_alloc_real(static_cast<std::size_t>(n_) * n_);
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(n_) * nc_);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_2d(n_, n_, real_, spec_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_2d(n_, n_, spec_, real_, FFTW_ESTIMATE);
  }

  ~TorusSpectral() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  TorusSpectral(const TorusSpectral&) = delete;
  TorusSpectral& operator=(const TorusSpectral&) = delete;

  // Wavenumber along a transform axis of length n for storage index a,
  // mapped into [-n/2, n/2).
  double wavenumber(int a) const { return a <= n_ / 2 ? a : a - n_; }

  void laplacian(const double* in, double* out) {
    apply_multiplier(in, out, [](double k2) { return -k2; });
  }

  // Solves Lap v = in restricted to mean-zero data; the zero mode of the
  // result is set to zero.
  void poisson_zero_mean(const double* in, double* out) {
    apply_multiplier(in, out,
                     [](double k2) { return k2 > 0.0 ? -1.0 / k2 : 0.0; });
  }

  // Dirichlet energy integral |grad u|^2 via Parseval: hermitian-redundant
  // columns 0 < b < n/2 are counted twice.
  double dirichlet(const double* in) {
    const std::size_t nn = static_cast<std::size_t>(n_) * n_;
    for (std::size_t i = 0; i < nn; ++i) real_[i] = in[i];
    fftw_execute(fwd_);
    double sum = 0.0;
    for (int a = 0; a < n_; ++a) {
      const double ky = wavenumber(a);
      for (int b = 0; b < nc_; ++b) {
        const double kx = b;
        const double k2 = kx * kx + ky * ky;
        const fftw_complex& c = spec_[static_cast<std::size_t>(a) * nc_ + b];
        const double mag2 = c[0] * c[0] + c[1] * c[1];
        const double mult = (b == 0 || b == n_ / 2) ? 1.0 : 2.0;
        sum += mult * k2 * mag2;
      }
    }
    const double n2 = static_cast<double>(n_) * n_;
    return 4.0 * kPi * kPi * sum / (n2 * n2);
  }

 private:
  template <class Mult>
  void apply_multiplier(const double* in, double* out, Mult mult) {
    const std::size_t nn = static_cast<std::size_t>(n_) * n_;
    for (std::size_t i = 0; i < nn; ++i) real_[i] = in[i];
    fftw_execute(fwd_);
    for (int a = 0; a < n_; ++a) {
      const double ky = wavenumber(a);
      for (int b = 0; b < nc_; ++b) {
        const double kx = b;
        const double m = mult(kx * kx + ky * ky);
        fftw_complex& c = spec_[static_cast<std::size_t>(a) * nc_ + b];
        c[0] *= m;
        c[1] *= m;
      }
    }
    fftw_execute(bwd_);
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    for (std::size_t i = 0; i < nn; ++i) out[i] = real_[i] * scale;
  }

  int n_;
  int nc_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan bwd_;
};

}  // namespace detail

// Laplace-Beltrami operator and Dirichlet energy for one mesh. Torus: exact
// spectral differentiation (trigonometric eigenfunctions are exact to
// roundoff). Sphere: second-order flux-form finite volumes on the
// cell-centered grid; the flux through the poles is zero, which makes the
// operator self-adjoint in the mesh quadrature and gives integral(Lap u) = 0
// exactly. Instances carry FFT workspaces: share one per thread, not across
// threads.
class DifferentialOps {
 public:
  explicit DifferentialOps(const MeshGeometry& mesh) : mesh_(&mesh) {
    if (mesh.kind == MeshKind::Torus) {
      spectral_ = std::make_unique<detail::TorusSpectral>(mesh.n1);
      lap_eig_max_ = static_cast<double>(mesh.n1) * mesh.n1 / 2.0;
    } else {
      const int nt = mesh.n1, np = mesh.n2;
      const double dt = kPi / nt;
      const double dp = 2.0 * kPi / np;
      // Both tables are mirrored about the equator so the stencil commutes
      // bitwise with the theta-flip isometry.
      sin_face_.assign(nt + 1, 0.0);
      for (int j = 1; j <= nt / 2; ++j) {
        sin_face_[j] = std::sin(j * dt);
        sin_face_[nt - j] = sin_face_[j];
      }
      sin_center_.resize(nt);
      for (int j = 0; j < nt / 2; ++j) {
        sin_center_[j] = std::sin((j + 0.5) * dt);
        sin_center_[nt - 1 - j] = sin_center_[j];
      }
      inv_dt2_ = 1.0 / (dt * dt);
      inv_dp2_ = 1.0 / (dp * dp);
      diag_.assign(static_cast<std::size_t>(nt) * np, 0.0);
      double max_diag = 0.0;
      for (int j = 0; j < nt; ++j) {
        const double d = (sin_face_[j + 1] + sin_face_[j]) * inv_dt2_ /
                             sin_center_[j] +
                         2.0 * inv_dp2_ / (sin_center_[j] * sin_center_[j]);
        for (int i = 0; i < np; ++i) diag_[static_cast<std::size_t>(j) * np + i] = -d;
        max_diag = std::max(max_diag, d);
      }
      // Gershgorin: each row's off-diagonal mass equals its diagonal
      // magnitude, so the spectrum lies in [-2*max_diag, 0].
      lap_eig_max_ = 2.0 * max_diag;
    }
  }

  const MeshGeometry& mesh() const { return *mesh_; }

  // Largest magnitude eigenvalue of the discrete Laplacian (torus: exact,
  // (N/2)^2 + (N/2)^2; sphere: Gershgorin bound). Used for step-size
  // ceilings.
  double lap_eig_max() const { return lap_eig_max_; }

  void laplacian(const double* in, double* out) const {
    if (mesh_->kind == MeshKind::Torus) {
      spectral_->laplacian(in, out);
      return;
    }
    const int nt = mesh_->n1, np = mesh_->n2;
    for (int j = 0; j < nt; ++j) {
      const double sc = sin_center_[j];
      const double cN = sin_face_[j + 1] * inv_dt2_ / sc;
      const double cS = sin_face_[j] * inv_dt2_ / sc;
      const double cE = inv_dp2_ / (sc * sc);
      const double* row = in + static_cast<std::size_t>(j) * np;
      const double* north = in + static_cast<std::size_t>(j + 1) * np;
      const double* south = in + static_cast<std::size_t>(j - 1) * np;
      double* o = out + static_cast<std::size_t>(j) * np;
      for (int i = 0; i < np; ++i) {
        const int ie = i + 1 == np ? 0 : i + 1;
        const int iw = i == 0 ? np - 1 : i - 1;
        // The two polar flux terms are summed before the azimuthal term so
        // the result is bitwise invariant under exchanging them, which makes
        // the stencil commute exactly with the theta-flip isometry.
        double vt = 0.0;
        if (j + 1 < nt) vt += cN * (north[i] - row[i]);
        if (j > 0) vt += cS * (south[i] - row[i]);
        o[i] = cE * (row[ie] - 2.0 * row[i] + row[iw]) + vt;
      }
    }
  }

  Field laplacian(const Field& u) const {
    check_field(*mesh_, u, "laplacian");
    Field out = mesh_->make_field();
    laplacian(u.values.data(), out.values.data());
    return out;
  }

  // integral |grad u|^2 dV. Torus: Parseval over Fourier modes. Sphere: sum
  // of face fluxes, which reproduces -integral(u Lap u) identically.
  double dirichlet_energy(const Field& u) const {
    check_field(*mesh_, u, "dirichlet_energy");
    if (mesh_->kind == MeshKind::Torus) {
      return spectral_->dirichlet(u.values.data());
    }
    const int nt = mesh_->n1, np = mesh_->n2;
    const double dt = kPi / nt;
    const double dp = 2.0 * kPi / np;
    const double* v = u.values.data();
    double sum = 0.0;
    for (int j = 0; j + 1 < nt; ++j) {
      const double c = sin_face_[j + 1] * dp / dt;
      const double* row = v + static_cast<std::size_t>(j) * np;
      const double* north = v + static_cast<std::size_t>(j + 1) * np;
      for (int i = 0; i < np; ++i) {
        const double d = north[i] - row[i];
        sum += c * d * d;
      }
    }
    for (int j = 0; j < nt; ++j) {
      const double c = dt / (dp * sin_center_[j]);
      const double* row = v + static_cast<std::size_t>(j) * np;
      for (int i = 0; i < np; ++i) {
        const int ie = i + 1 == np ? 0 : i + 1;
        const double d = row[ie] - row[i];
        sum += c * d * d;
      }
    }
    return sum;
  }

  // Torus only: spectrally exact solve of Lap v = rhs on the mean-zero
  // subspace. Preconditioner for the Newton-Krylov solver.
  Field poisson_zero_mean(const Field& rhs) const {
    if (mesh_->kind != MeshKind::Torus) {
      throw ContractViolation("poisson_zero_mean: torus meshes only");
    }
    check_field(*mesh_, rhs, "poisson_zero_mean");
    Field out = mesh_->make_field();
    spectral_->poisson_zero_mean(rhs.values.data(), out.values.data());
    return out;
  }

  // Sphere only: diagonal of the Laplacian stencil, for Jacobi-type
  // preconditioning.
  const std::vector<double>& laplacian_diagonal() const {
    if (mesh_->kind != MeshKind::Sphere) {
      throw ContractViolation("laplacian_diagonal: sphere meshes only");
    }
    return diag_;
  }

 private:
  const MeshGeometry* mesh_;
  std::unique_ptr<detail::TorusSpectral> spectral_;
  std::vector<double> sin_face_;
  std::vector<double> sin_center_;
  std::vector<double> diag_;
  double inv_dt2_ = 0.0;
  double inv_dp2_ = 0.0;
  double lap_eig_max_ = 0.0;
};

// Convenience wrappers that build a workspace per call. Hot paths should
// hold a DifferentialOps instance instead.
inline Field laplacian(const MeshGeometry& mesh, const Field& u) {
  return DifferentialOps(mesh).laplacian(u);
}

inline double dirichlet_energy(const MeshGeometry& mesh, const Field& u) {
  return DifferentialOps(mesh).dirichlet_energy(u);
}

}  // namespace meanflow

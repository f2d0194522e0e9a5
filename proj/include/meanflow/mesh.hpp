#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "meanflow/errors.hpp"

namespace meanflow {

inline constexpr double kPi = std::numbers::pi_v<double>;

enum class MeshKind { Torus, Sphere };

inline std::string to_string(MeshKind k) {
  return k == MeshKind::Torus ? "torus" : "sphere";
}

// Structural identity of a mesh: two meshes with the same kind and resolution
// are interchangeable for Field compatibility checks.
struct MeshTag {
  MeshKind kind = MeshKind::Torus;
  int n1 = 0;  // torus: N, sphere: n_theta
  int n2 = 0;  // torus: N, sphere: n_phi
  friend bool operator==(const MeshTag&, const MeshTag&) = default;
};

struct MeshSpec {
  MeshKind kind = MeshKind::Torus;
  int n1 = 0;
  int n2 = 0;
};

// Scalar field sampled at mesh nodes. Node order is row-major with the
// second coordinate (torus x, sphere phi) varying fastest:
//   torus:  node = j*N + i      samples u(x_i, y_j), x_i = 2*pi*i/N
//   sphere: node = j*n_phi + i  samples u(theta_j, phi_i)
struct Field {
  MeshTag mesh;
  std::vector<double> values;

  double& operator[](std::size_t i) { return values[i]; }
  const double& operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
};

// Flat 2-torus [0,2*pi)^2 on an N x N uniform grid, or the unit sphere on a
// cell-centered latitude-longitude grid (theta_j = (j+1/2)*pi/n_theta,
// phi_i = 2*pi*i/n_phi). Plain aggregate; built by build_mesh and treated as
// immutable afterwards.
struct MeshGeometry {
  MeshKind kind = MeshKind::Torus;
  int n1 = 0;                       // torus: N, sphere: n_theta
  int n2 = 0;                       // torus: N, sphere: n_phi
  std::vector<double> coord1;       // per node: torus x, sphere theta
  std::vector<double> coord2;       // per node: torus y, sphere phi
  std::vector<double> quad_weights; // per node, strictly positive
  double volume = 0.0;              // sum of quad_weights
  double injectivity_radius = 0.0;  // torus: pi, sphere: pi
  double lambda1 = 0.0;             // first nonzero Laplace eigenvalue

  int node_count() const { return n1 * n2; }
  MeshTag tag() const { return MeshTag{kind, n1, n2}; }

  Field make_field(double fill = 0.0) const {
    return Field{tag(), std::vector<double>(static_cast<std::size_t>(node_count()), fill)};
  }
};

inline void check_field(const MeshGeometry& mesh, const Field& u,
                        const char* where) {
  if (!(u.mesh == mesh.tag()) ||
      u.values.size() != static_cast<std::size_t>(mesh.node_count())) {
    throw ContractViolation(std::string(where) +
                            ": field does not belong to this mesh");
  }
}

inline MeshGeometry build_mesh(const MeshSpec& spec) {
  MeshGeometry m;
  m.kind = spec.kind;
  if (spec.kind == MeshKind::Torus) {
    const int n = spec.n1;
    if (n < 4 || n % 2 != 0) {
      throw ConfigError("torus resolution must be even and >= 4, got " +
                        std::to_string(n));
    }
    m.n1 = n;
    m.n2 = n;
    const double h = 2.0 * kPi / n;
    const double w = h * h;
    m.coord1.resize(static_cast<std::size_t>(n) * n);
    m.coord2.resize(m.coord1.size());
    m.quad_weights.assign(m.coord1.size(), w);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * n + i;
        m.coord1[idx] = h * i;
        m.coord2[idx] = h * j;
      }
    }
    m.volume = 4.0 * kPi * kPi;
    m.injectivity_radius = kPi;
    m.lambda1 = 1.0;
  } else {
    const int nt = spec.n1;
    const int np = spec.n2;
    if (nt < 4 || nt % 2 != 0 || np < 4 || np % 2 != 0) {
      throw ConfigError("sphere resolution must be even and >= 4 in both "
                        "directions, got " +
                        std::to_string(nt) + " x " + std::to_string(np));
    }
    m.n1 = nt;
    m.n2 = np;
    const double dt = kPi / nt;
    const double dp = 2.0 * kPi / np;
    m.coord1.resize(static_cast<std::size_t>(nt) * np);
    m.coord2.resize(m.coord1.size());
    m.quad_weights.resize(m.coord1.size());
    // Ring weights are mirrored about the equator instead of recomputed, so
    // the theta-flip isometry maps the weight table to itself bitwise.
    std::vector<double> ring_w(nt);
    for (int j = 0; j < nt / 2; ++j) {
      const double w = std::sin((j + 0.5) * dt) * dt * dp;
      ring_w[j] = w;
      ring_w[nt - 1 - j] = w;
    }
    for (int j = 0; j < nt; ++j) {
      const double theta = (j + 0.5) * dt;
      for (int i = 0; i < np; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * np + i;
        m.coord1[idx] = theta;
        m.coord2[idx] = dp * i;
        m.quad_weights[idx] = ring_w[j];
      }
    }
    m.volume = 0.0;
    for (double w : m.quad_weights) m.volume += w;
    m.injectivity_radius = kPi;
    m.lambda1 = 2.0;
  }
  return m;
}

inline MeshGeometry build_torus(int n) {
  return build_mesh(MeshSpec{MeshKind::Torus, n, n});
}

inline MeshGeometry build_sphere(int n_theta, int n_phi) {
  return build_mesh(MeshSpec{MeshKind::Sphere, n_theta, n_phi});
}

// Quadrature of a nodal field against the volume form.
inline double integrate(const MeshGeometry& mesh, const Field& u) {
  check_field(mesh, u, "integrate");
  double s = 0.0;
  const std::size_t n = u.values.size();
  for (std::size_t i = 0; i < n; ++i) s += mesh.quad_weights[i] * u.values[i];
  return s;
}

inline double mean_value(const MeshGeometry& mesh, const Field& u) {
  return integrate(mesh, u) / mesh.volume;
}

// Geodesic distance between two nodes. Torus: minimum over periodic images
// (equivalently, per-axis minimal image). Sphere: great-circle arc.
inline double geodesic_distance(const MeshGeometry& mesh, int a, int b) {
  if (a < 0 || b < 0 || a >= mesh.node_count() || b >= mesh.node_count()) {
    throw ContractViolation("geodesic_distance: node index out of range");
  }
  if (mesh.kind == MeshKind::Torus) {
    double dx = std::fabs(mesh.coord1[a] - mesh.coord1[b]);
    double dy = std::fabs(mesh.coord2[a] - mesh.coord2[b]);
    dx = std::min(dx, 2.0 * kPi - dx);
    dy = std::min(dy, 2.0 * kPi - dy);
    return std::sqrt(dx * dx + dy * dy);
  }
  const double t1 = mesh.coord1[a], p1 = mesh.coord2[a];
  const double t2 = mesh.coord1[b], p2 = mesh.coord2[b];
  const double dot = std::cos(t1) * std::cos(t2) +
                     std::sin(t1) * std::sin(t2) * std::cos(p1 - p2);
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

}  // namespace meanflow

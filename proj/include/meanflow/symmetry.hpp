#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/mesh.hpp"

namespace meanflow {

// One group generator as written in config: a name plus integer arguments.
// Torus: shift(p,q), flip_x, flip_y, swap_xy. Sphere: rot_phi(m),
// flip_theta, antipodal.
struct GeneratorSpec {
  std::string name;
  std::vector<int> args;
};

// A finite isometry group realized as exact node permutations. elements
// always contains the identity and is closed under composition.
struct GroupAction {
  MeshTag mesh;
  std::vector<std::vector<std::uint32_t>> elements;
  int k_min = 1;  // smallest orbit cardinality over all nodes

  std::size_t order() const { return elements.size(); }
};

namespace detail {

inline std::vector<std::uint32_t> generator_permutation(const MeshGeometry& mesh,
                                                        const GeneratorSpec& g) {
  const int nodes = mesh.node_count();
  std::vector<std::uint32_t> perm(static_cast<std::size_t>(nodes));
  auto wrap = [](int v, int n) { return ((v % n) + n) % n; };

  if (mesh.kind == MeshKind::Torus) {
    const int n = mesh.n1;
    int dp = 0, dq = 0;
    enum { Shift, FlipX, FlipY, SwapXY } kind;
    if (g.name == "shift") {
      if (g.args.size() != 2) throw ConfigError("shift takes two integer arguments");
      kind = Shift;
      dp = wrap(g.args[0], n);
      dq = wrap(g.args[1], n);
    } else if (g.name == "flip_x" || g.name == "flip_y" || g.name == "swap_xy") {
      if (!g.args.empty()) throw ConfigError(g.name + " takes no arguments");
      kind = g.name == "flip_x" ? FlipX : (g.name == "flip_y" ? FlipY : SwapXY);
    } else {
      throw ConfigError("generator '" + g.name + "' is not valid on a torus mesh");
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        int ii = i, jj = j;
        switch (kind) {
          case Shift: ii = wrap(i + dp, n); jj = wrap(j + dq, n); break;
          case FlipX: ii = wrap(-i, n); break;
          case FlipY: jj = wrap(-j, n); break;
          case SwapXY: ii = j; jj = i; break;
        }
        perm[static_cast<std::size_t>(j) * n + i] =
            static_cast<std::uint32_t>(jj * n + ii);
      }
    }
    return perm;
  }

  const int nt = mesh.n1, np = mesh.n2;
  int dp = 0;
  bool flip = false;
  if (g.name == "rot_phi") {
    if (g.args.size() != 1) throw ConfigError("rot_phi takes one integer argument");
    dp = wrap(g.args[0], np);
  } else if (g.name == "flip_theta") {
    if (!g.args.empty()) throw ConfigError("flip_theta takes no arguments");
    flip = true;
  } else if (g.name == "antipodal") {
    if (!g.args.empty()) throw ConfigError("antipodal takes no arguments");
    flip = true;
    dp = np / 2;
  } else {
    throw ConfigError("generator '" + g.name + "' is not valid on a sphere mesh");
  }
  for (int j = 0; j < nt; ++j) {
    const int jj = flip ? nt - 1 - j : j;
    for (int i = 0; i < np; ++i) {
      const int ii = wrap(i + dp, np);
      perm[static_cast<std::size_t>(j) * np + i] =
          static_cast<std::uint32_t>(jj * np + ii);
    }
  }
  return perm;
}

}  // namespace detail

// Parses the config value grammar for groups: a comma-separated list of
// generator names with optional parenthesized integer arguments, e.g.
// "shift(32,0), flip_x".
inline std::vector<GeneratorSpec> parse_generators(const std::string& src) {
  std::vector<GeneratorSpec> out;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
  };
  skip_ws();
  if (pos == src.size()) throw ConfigError("empty generator list");
  while (pos < src.size()) {
    GeneratorSpec g;
    skip_ws();
    const std::size_t start = pos;
    while (pos < src.size() &&
           (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
      ++pos;
    }
    g.name = src.substr(start, pos - start);
    if (g.name.empty()) {
      throw ConfigError("malformed generator list near '" + src.substr(pos) + "'");
    }
    skip_ws();
    if (pos < src.size() && src[pos] == '(') {
      ++pos;
      for (;;) {
        skip_ws();
        std::size_t intStart = pos;
        if (pos < src.size() && (src[pos] == '-' || src[pos] == '+')) ++pos;
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        if (pos == intStart) {
          throw ConfigError("expected an integer argument in generator '" + g.name + "'");
        }
        g.args.push_back(std::stoi(src.substr(intStart, pos - intStart)));
        skip_ws();
        if (pos < src.size() && src[pos] == ',') { ++pos; continue; }
        if (pos < src.size() && src[pos] == ')') { ++pos; break; }
        throw ConfigError("expected ',' or ')' in generator '" + g.name + "'");
      }
    }
    out.push_back(std::move(g));
    skip_ws();
    if (pos == src.size()) break;
    if (src[pos] != ',') {
      throw ConfigError("expected ',' between generators near '" + src.substr(pos) + "'");
    }
    ++pos;
    skip_ws();
    if (pos == src.size()) throw ConfigError("trailing ',' in generator list");
  }
  return out;
}

// Builds the closure of the generated permutation group by breadth-first
// composition. Throws if the closure would exceed max_order elements.
inline GroupAction build_group(const MeshGeometry& mesh,
                               const std::vector<GeneratorSpec>& gens,
                               std::size_t max_order = 4096) {
  GroupAction group;
  group.mesh = mesh.tag();
  const int nodes = mesh.node_count();

  std::vector<std::uint32_t> identity(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) identity[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);

  std::vector<std::vector<std::uint32_t>> gen_perms;
  gen_perms.reserve(gens.size());
  for (const auto& g : gens) gen_perms.push_back(detail::generator_permutation(mesh, g));

  std::set<std::vector<std::uint32_t>> closed;
  closed.insert(identity);
  std::vector<const std::vector<std::uint32_t>*> frontier;
  frontier.push_back(&*closed.find(identity));
  while (!frontier.empty()) {
    std::vector<const std::vector<std::uint32_t>*> next;
    for (const auto* elem : frontier) {
      for (const auto& g : gen_perms) {
        std::vector<std::uint32_t> comp(static_cast<std::size_t>(nodes));
        for (int i = 0; i < nodes; ++i) comp[static_cast<std::size_t>(i)] = g[(*elem)[static_cast<std::size_t>(i)]];
        auto [it, inserted] = closed.insert(std::move(comp));
        if (inserted) {
          if (closed.size() > max_order) {
            throw ConfigError("group closure exceeds the maximum order " +
                              std::to_string(max_order));
          }
          next.push_back(&*it);
        }
      }
    }
    frontier = std::move(next);
  }

  group.elements.assign(closed.begin(), closed.end());

  // Every element must carry quadrature weights to themselves bitwise; this
  // is what makes symmetrize mass- and energy-consistent.
  for (const auto& p : group.elements) {
    for (int i = 0; i < nodes; ++i) {
      if (mesh.quad_weights[p[static_cast<std::size_t>(i)]] != mesh.quad_weights[static_cast<std::size_t>(i)]) {
        throw ConfigError("group element does not preserve quadrature weights");
      }
    }
  }

  std::vector<char> visited(static_cast<std::size_t>(nodes), 0);
  int kmin = nodes;
  std::vector<std::uint32_t> orbit_buf;
  for (int start = 0; start < nodes; ++start) {
    if (visited[static_cast<std::size_t>(start)]) continue;
    orbit_buf.clear();
    for (const auto& p : group.elements) orbit_buf.push_back(p[static_cast<std::size_t>(start)]);
    std::sort(orbit_buf.begin(), orbit_buf.end());
    orbit_buf.erase(std::unique(orbit_buf.begin(), orbit_buf.end()), orbit_buf.end());
    for (auto v : orbit_buf) visited[v] = 1;
    kmin = std::min(kmin, static_cast<int>(orbit_buf.size()));
  }
  group.k_min = kmin;
  return group;
}

inline std::vector<int> orbit(const GroupAction& group, int node) {
  std::vector<int> out;
  out.reserve(group.elements.size());
  for (const auto& p : group.elements) out.push_back(static_cast<int>(p[static_cast<std::size_t>(node)]));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Group average: out(x) = (1/|G|) sum_sigma u(sigma(x)).
inline Field symmetrize(const MeshGeometry& mesh, const GroupAction& group,
                        const Field& u) {
  check_field(mesh, u, "symmetrize");
  if (!(group.mesh == mesh.tag())) {
    throw ContractViolation("symmetrize: group belongs to a different mesh");
  }
  Field out = mesh.make_field();
  const double inv = 1.0 / static_cast<double>(group.elements.size());
  for (const auto& p : group.elements) {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += u.values[p[i]];
  }
  for (auto& v : out.values) v *= inv;
  return out;
}

// Max-norm distance from u to its group average; zero iff u is invariant.
inline double invariance_defect(const MeshGeometry& mesh, const GroupAction& group,
                                const Field& u) {
  const Field s = symmetrize(mesh, group, u);
  double m = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    m = std::max(m, std::fabs(u.values[i] - s.values[i]));
  }
  return m;
}

struct SeparatedPoints {
  std::vector<int> points;
  double delta = 0.0;  // min pairwise geodesic distance of points
};

// Picks k points of the orbit of node (always including node) with large
// minimum pairwise distance. Orbits of size <= 12 are solved exactly by
// enumeration; larger orbits use greedy farthest-point selection, whose
// delta is a certified lower bound for the optimum.
inline SeparatedPoints separated_orbit_points(const MeshGeometry& mesh,
                                              const GroupAction& group,
                                              int node, int k) {
  const std::vector<int> orb = orbit(group, node);
  if (k < 1 || static_cast<std::size_t>(k) > orb.size()) {
    throw ConfigError("requested " + std::to_string(k) + " separated points from an orbit of size " +
                      std::to_string(orb.size()));
  }
  SeparatedPoints best;
  if (k == 1) {
    best.points = {node};
    best.delta = std::numeric_limits<double>::infinity();
    return best;
  }

  auto min_pairwise = [&](const std::vector<int>& pts) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < pts.size(); ++a) {
      for (std::size_t b = a + 1; b < pts.size(); ++b) {
        m = std::min(m, geodesic_distance(mesh, pts[a], pts[b]));
      }
    }
    return m;
  };

  if (orb.size() <= 12) {
    // exhaustive over k-subsets containing node; by group invariance of the
    // orbit this attains the unrestricted optimum
    std::vector<int> others;
    for (int p : orb) {
      if (p != node) others.push_back(p);
    }
    std::vector<char> mask(others.size(), 0);
    std::fill(mask.begin(), mask.begin() + (k - 1), 1);
    best.delta = -1.0;
    do {
      std::vector<int> pts = {node};
      for (std::size_t i = 0; i < others.size(); ++i) {
        if (mask[i]) pts.push_back(others[i]);
      }
      const double d = min_pairwise(pts);
      if (d > best.delta) {
        best.delta = d;
        best.points = pts;
      }
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return best;
  }

  std::vector<int> pts = {node};
  while (static_cast<int>(pts.size()) < k) {
    int arg = -1;
    double argDist = -1.0;
    for (int cand : orb) {
      if (std::find(pts.begin(), pts.end(), cand) != pts.end()) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (int p : pts) dmin = std::min(dmin, geodesic_distance(mesh, cand, p));
      if (dmin > argDist) {
        argDist = dmin;
        arg = cand;
      }
    }
    pts.push_back(arg);
  }
  best.points = pts;
  best.delta = min_pairwise(pts);
  return best;
}

}  // namespace meanflow

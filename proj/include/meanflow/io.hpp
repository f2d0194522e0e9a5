#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/format.hpp"
#include "meanflow/mesh.hpp"

namespace meanflow {

struct Snapshot {
  MeshTag mesh;
  double t = 0.0;
  std::vector<double> values;
};

namespace detail {

// Rows follow the node layout: the fastest-varying coordinate spans a row
// (torus x, sphere phi), one grid line per row.
inline int snapshot_cols(const MeshTag& tag) {
  return tag.kind == MeshKind::Torus ? tag.n1 : tag.n2;
}

}  // namespace detail

inline void write_snapshot(const std::string& path, const MeshTag& tag, double t,
                           const std::vector<double>& values) {
  if (static_cast<long>(values.size()) !=
      static_cast<long>(tag.n1) * tag.n2) {
    throw ContractViolation("write_snapshot: value count does not match mesh");
  }
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  if (tag.kind == MeshKind::Torus) {
    out << "mesh torus " << tag.n1 << "\n";
  } else {
    out << "mesh sphere " << tag.n1 << " " << tag.n2 << "\n";
  }
  out << "t " << format_g17(t) << "\n";
  const int cols = detail::snapshot_cols(tag);
  const int rows = static_cast<int>(values.size()) / cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) out << ",";
      out << format_g17(values[static_cast<std::size_t>(r) * cols + c]);
    }
    out << "\n";
  }
  if (!out.flush()) throw ConfigError("failed writing " + path);
}

inline void write_snapshot(const std::string& path, const MeshGeometry& mesh,
                           double t, const Field& u) {
  check_field(mesh, u, "write_snapshot");
  write_snapshot(path, mesh.tag(), t, u.values);
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  auto fail = [&](int line, const std::string& what) -> ConfigError {
    return ConfigError(path + ":" + std::to_string(line) + ": " + what);
  };

  Snapshot snap;
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing mesh header");
  {
    std::istringstream hdr(line);
    std::string word, kind;
    hdr >> word >> kind;
    if (word != "mesh") throw fail(1, "expected 'mesh <kind> ...'");
    if (kind == "torus") {
      snap.mesh.kind = MeshKind::Torus;
      if (!(hdr >> snap.mesh.n1)) throw fail(1, "torus header needs one size");
      snap.mesh.n2 = snap.mesh.n1;
    } else if (kind == "sphere") {
      snap.mesh.kind = MeshKind::Sphere;
      if (!(hdr >> snap.mesh.n1 >> snap.mesh.n2)) {
        throw fail(1, "sphere header needs two sizes");
      }
    } else {
      throw fail(1, "unknown mesh kind '" + kind + "'");
    }
    std::string extra;
    if (hdr >> extra) throw fail(1, "trailing tokens in mesh header");
    if (snap.mesh.n1 < 4 || snap.mesh.n2 < 4 || snap.mesh.n1 % 2 ||
        snap.mesh.n2 % 2) {
      throw fail(1, "mesh sizes must be even and at least 4");
    }
  }

  if (!std::getline(in, line)) throw fail(2, "missing time header");
  {
    if (line.rfind("t ", 0) != 0) throw fail(2, "expected 't <value>'");
    const char* s = line.c_str() + 2;
    char* end = nullptr;
    snap.t = std::strtod(s, &end);
    if (end == s || *end != '\0') throw fail(2, "unparsable time value");
  }

  const int cols = detail::snapshot_cols(snap.mesh);
  const int expected_rows =
      snap.mesh.kind == MeshKind::Torus ? snap.mesh.n2 : snap.mesh.n1;
  snap.values.reserve(static_cast<std::size_t>(expected_rows) * cols);
  int lineno = 2;
  for (int r = 0; r < expected_rows; ++r) {
    if (!std::getline(in, line)) throw fail(lineno + 1, "missing data row");
    ++lineno;
    const char* s = line.c_str();
    for (int c = 0; c < cols; ++c) {
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (end == s) throw fail(lineno, "unparsable value in column " +
                                           std::to_string(c + 1));
      snap.values.push_back(v);
      s = end;
      if (c + 1 < cols) {
        if (*s != ',') throw fail(lineno, "expected ',' after column " +
                                              std::to_string(c + 1));
        ++s;
      }
    }
    if (*s != '\0') throw fail(lineno, "trailing characters after last column");
  }
  if (std::getline(in, line) && !line.empty()) {
    throw fail(lineno + 1, "unexpected extra data");
  }
  return snap;
}

}  // namespace meanflow

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "meanflow/commands.hpp"
#include "meanflow/config.hpp"
#include "meanflow/io.hpp"
#include "meanflow/verify.hpp"

using namespace meanflow;
using Catch::Matchers::WithinRel;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "meanflow_test_cli" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  REQUIRE(out.good());
}

ExperimentConfig parse_text(const std::string& text) {
  unsetenv("MEANFLOW_OUTPUT");
  return parse_config_text(text, "test.cfg");
}

// Message of the ConfigError raised by parsing, empty when parsing succeeds.
std::string parse_error(const std::string& text) {
  try {
    parse_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool mentions(const std::string& msg, const std::string& needle) {
  return msg.find(needle) != std::string::npos;
}

// Small torus problem that converges in well under a second.
ExperimentConfig quick_run_config(const std::string& outdir) {
  ExperimentConfig cfg;
  cfg.flow.mesh = MeshSpec{MeshKind::Torus, 16, 16};
  cfg.flow.rho = 4.0 * kPi;
  cfg.flow.f_expr = parse_expr("1 + 0.5*cos(x)");
  cfg.flow.u0_expr = parse_expr("0");
  cfg.flow.residual_tol = 1e-7;
  cfg.flow.t_max = 200.0;
  cfg.flow.record_every = 10;
  cfg.newton.rho_target = cfg.flow.rho;
  cfg.output_dir = outdir;
  return cfg;
}

// Parses "key value" report lines into a map-like vector lookup.
std::string report_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return "";
}

}  // namespace

TEST_CASE("empty config yields the documented defaults", "[cli][config]") {
  const ExperimentConfig cfg = parse_text("");
  REQUIRE(cfg.flow.mesh.kind == MeshKind::Torus);
  REQUIRE(cfg.flow.mesh.n1 == 64);
  REQUIRE(cfg.flow.mesh.n2 == 64);
  REQUIRE(cfg.flow.rho == 0.0);
  REQUIRE(cfg.flow.dt_init == 1e-3);
  REQUIRE(cfg.flow.residual_tol == 1e-8);
  REQUIRE(cfg.flow.t_max == 200.0);
  REQUIRE(cfg.flow.record_every == 10);
  REQUIRE(cfg.flow.snapshot_every == 0);
  REQUIRE_FALSE(cfg.flow.symmetrize_each_step);
  REQUIRE(cfg.flow.mass_project_each_step);
  REQUIRE(cfg.flow.group.empty());
  REQUIRE(cfg.newton.rho_continuation_steps == 8);
  REQUIRE(cfg.newton.newton_tol == 1e-10);
  REQUIRE(cfg.output_dir == "out");
  REQUIRE(cfg.preset.empty());
}

TEST_CASE("config assignments reach every section", "[cli][config]") {
  const std::string text =
      "# full tour of the grammar\n"
      "[mesh]\n"
      "kind = torus\n"
      "n = 32\n"
      "\n"
      "[flow]\n"
      "rho = 6.5\n"
      "f = \"1 + 0.25*cos(2*x)\"  # keep strictly positive\n"
      "u0 = \"0.1*sin(y)\"\n"
      "dt_init = 5e-4\n"
      "dt_min = 1e-10\n"
      "dt_max = 0.5\n"
      "cfl_safety = 0.8\n"
      "residual_tol = 1e-9\n"
      "t_max = 12.0\n"
      "record_every = 4\n"
      "snapshot_every = 40\n"
      "symmetrize_each_step = true\n"
      "mass_project_each_step = false\n"
      "\n"
      "[group]\n"
      "generators = shift(16,0)\n"
      "\n"
      "[newton]\n"
      "continuation_steps = 4\n"
      "tol = 1e-9\n"
      "max_iters = 30\n"
      "damping = 0.25\n"
      "linear_tol = 1e-8\n"
      "\n"
      "[output]\n"
      "dir = results/run1\n";
  const ExperimentConfig cfg = parse_text(text);
  REQUIRE(cfg.flow.mesh.n1 == 32);
  REQUIRE(cfg.flow.rho == 6.5);
  REQUIRE(cfg.flow.dt_init == 5e-4);
  REQUIRE(cfg.flow.dt_max == 0.5);
  REQUIRE(cfg.flow.cfl_safety == 0.8);
  REQUIRE(cfg.flow.residual_tol == 1e-9);
  REQUIRE(cfg.flow.t_max == 12.0);
  REQUIRE(cfg.flow.record_every == 4);
  REQUIRE(cfg.flow.snapshot_every == 40);
  REQUIRE(cfg.flow.symmetrize_each_step);
  REQUIRE_FALSE(cfg.flow.mass_project_each_step);
  REQUIRE(cfg.flow.group.size() == 1);
  REQUIRE(cfg.newton.rho_continuation_steps == 4);
  REQUIRE(cfg.newton.max_iters == 30);
  REQUIRE(cfg.newton.damping == 0.25);
  REQUIRE(cfg.newton.linear_tol == 1e-8);
  REQUIRE(cfg.output_dir == "results/run1");
  REQUIRE(cfg.newton.rho_target == 6.5);
}

TEST_CASE("config errors carry the source name and line", "[cli][config]") {
  SECTION("non-numeric value") {
    const std::string msg = parse_error("[flow]\nrho = banana\n");
    REQUIRE(mentions(msg, "test.cfg:2:"));
    REQUIRE(mentions(msg, "'rho'"));
  }
  SECTION("unknown key") {
    const std::string msg = parse_error("[flow]\nspeed = 3\n");
    REQUIRE(mentions(msg, "test.cfg:2:"));
    REQUIRE(mentions(msg, "unknown key 'speed' in [flow]"));
  }
  SECTION("unknown section") {
    REQUIRE(mentions(parse_error("[turbo]\n"), "unknown section [turbo]"));
  }
  SECTION("malformed section header") {
    REQUIRE(mentions(parse_error("[flow\nrho = 1\n"), "test.cfg:1:"));
  }
  SECTION("key outside any section") {
    REQUIRE(mentions(parse_error("rho = 1\n"), "before any [section]"));
  }
  SECTION("missing value") {
    REQUIRE(mentions(parse_error("[flow]\nrho =\n"), "missing value"));
  }
  SECTION("unquoted expression") {
    const std::string msg = parse_error("[flow]\nf = 1 + cos(x)\n");
    REQUIRE(mentions(msg, "must be double-quoted"));
  }
  SECTION("expression syntax error points at the config line") {
    const std::string msg = parse_error("[flow]\nf = \"1 + cos(\"\n");
    REQUIRE(mentions(msg, "test.cfg:2:"));
    REQUIRE(mentions(msg, "'f'"));
  }
  SECTION("duplicate preset") {
    const std::string msg =
        parse_error("preset = subcritical_baseline\npreset = sphere_even\n");
    REQUIRE(mentions(msg, "test.cfg:2:"));
    REQUIRE(mentions(msg, "only be assigned once"));
  }
  SECTION("preset inside a section is not a key") {
    const std::string msg = parse_error("[flow]\npreset = sphere_even\n");
    REQUIRE(mentions(msg, "unknown key 'preset' in [flow]"));
  }
  SECTION("unknown preset") {
    const std::string msg = parse_error("preset = warp_drive\n");
    REQUIRE(mentions(msg, "test.cfg:1:"));
    REQUIRE(mentions(msg, "unknown preset 'warp_drive'"));
  }
  SECTION("sphere size keys on the torus") {
    const std::string msg = parse_error("[mesh]\nkind = torus\nn_theta = 32\n");
    REQUIRE(mentions(msg, "test.cfg:3:"));
    REQUIRE(mentions(msg, "n_theta applies to sphere"));
  }
  SECTION("torus size key on the sphere") {
    const std::string msg = parse_error("[mesh]\nkind = sphere\nn = 32\n");
    REQUIRE(mentions(msg, "n applies to torus"));
  }
  SECTION("bad mesh kind") {
    REQUIRE(mentions(parse_error("[mesh]\nkind = klein\n"),
                     "kind must be torus or sphere"));
  }
  SECTION("nonpositive weight") {
    REQUIRE_THROWS_AS(parse_text("[flow]\nf = \"cos(x)\"\n"), ConfigError);
  }
  SECTION("weight not invariant under the configured group") {
    const std::string msg = parse_error(
        "[mesh]\nn = 16\n[flow]\nf = \"1 + 0.5*cos(x)\"\n"
        "[group]\ngenerators = shift(8,0)\n");
    REQUIRE(mentions(msg, "not invariant"));
  }
}

TEST_CASE("sphere mesh keys and defaults", "[cli][config]") {
  SECTION("explicit sizes") {
    const ExperimentConfig cfg = parse_text(
        "[mesh]\nkind = sphere\nn_theta = 16\nn_phi = 32\n"
        "[flow]\nrho = 1\n");
    REQUIRE(cfg.flow.mesh.kind == MeshKind::Sphere);
    REQUIRE(cfg.flow.mesh.n1 == 16);
    REQUIRE(cfg.flow.mesh.n2 == 32);
  }
  SECTION("kind switch alone picks the stock sphere resolution") {
    const ExperimentConfig cfg = parse_text("[mesh]\nkind = sphere\n");
    REQUIRE(cfg.flow.mesh.n1 == 32);
    REQUIRE(cfg.flow.mesh.n2 == 64);
  }
}

TEST_CASE("presets populate full experiments", "[cli][config]") {
  SECTION("subcritical_baseline") {
    const ExperimentConfig cfg = parse_text("preset = subcritical_baseline\n");
    REQUIRE(cfg.preset == "subcritical_baseline");
    REQUIRE(cfg.flow.mesh.kind == MeshKind::Torus);
    REQUIRE(cfg.flow.mesh.n1 == 64);
    REQUIRE_THAT(cfg.flow.rho, WithinRel(4.0 * kPi, 1e-15));
    REQUIRE(cfg.flow.group.empty());
  }
  SECTION("torus_translation group closes to order 256") {
    const ExperimentConfig cfg = parse_text("preset = torus_translation\n");
    REQUIRE_THAT(cfg.flow.rho, WithinRel(20.0 * kPi, 1e-15));
    const MeshGeometry mesh = build_mesh(cfg.flow.mesh);
    const GroupAction action = build_group(mesh, cfg.flow.group);
    REQUIRE(action.order() == 256);
  }
  SECTION("sphere_even") {
    const ExperimentConfig cfg = parse_text("preset = sphere_even\n");
    REQUIRE(cfg.flow.mesh.kind == MeshKind::Sphere);
    REQUIRE(cfg.flow.mesh.n1 == 32);
    REQUIRE(cfg.flow.mesh.n2 == 64);
    REQUIRE_THAT(cfg.flow.rho, WithinRel(12.0 * kPi, 1e-15));
    REQUIRE(cfg.flow.group.size() == 1);
  }
  SECTION("later sections override preset values") {
    const ExperimentConfig cfg = parse_text(
        "preset = subcritical_baseline\n[mesh]\nn = 32\n[flow]\nrho = 2\n");
    REQUIRE(cfg.flow.mesh.n1 == 32);
    REQUIRE(cfg.flow.rho == 2.0);
    REQUIRE(cfg.newton.rho_target == 2.0);
  }
  SECTION("preset rejects an override breaking its symmetry") {
    const std::string msg = parse_error(
        "preset = sphere_even\n[flow]\nf = \"1.5 + cos(phi)\"\n");
    REQUIRE(mentions(msg, "not invariant"));
  }
}

TEST_CASE("MEANFLOW_OUTPUT overrides the configured directory", "[cli][config]") {
  setenv("MEANFLOW_OUTPUT", "/tmp/meanflow_redirect", 1);
  const ExperimentConfig cfg =
      parse_config_text("[output]\ndir = results/run1\n", "test.cfg");
  unsetenv("MEANFLOW_OUTPUT");
  REQUIRE(cfg.output_dir == "/tmp/meanflow_redirect");
}

TEST_CASE("parse_config reads from disk and names the file", "[cli][config]") {
  const fs::path dir = scratch_dir("cfgfile");
  write_file(dir / "exp.cfg", "[flow]\nrho = 1.25\n");
  unsetenv("MEANFLOW_OUTPUT");
  const ExperimentConfig cfg = parse_config((dir / "exp.cfg").string());
  REQUIRE(cfg.flow.rho == 1.25);
  try {
    write_file(dir / "bad.cfg", "[flow]\nrho = banana\n");
    parse_config((dir / "bad.cfg").string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(mentions(e.what(), "bad.cfg:2:"));
  }
  REQUIRE_THROWS_AS(parse_config((dir / "missing.cfg").string()), ConfigError);
}

TEST_CASE("snapshot files round-trip exactly", "[cli][io]") {
  const fs::path dir = scratch_dir("snapshots");
  SECTION("torus") {
    const MeshGeometry mesh = build_torus(8);
    Field u = mesh.make_field();
    for (int i = 0; i < mesh.node_count(); ++i) {
      u.values[static_cast<std::size_t>(i)] =
          std::sin(0.7 * i) + 1.0 / 3.0 * std::cos(2.3 * i);
    }
    const double t = kPi / 7.0;
    write_snapshot((dir / "u.dat").string(), mesh, t, u);
    const Snapshot snap = read_snapshot((dir / "u.dat").string());
    REQUIRE(snap.mesh == mesh.tag());
    REQUIRE(snap.t == t);
    REQUIRE(snap.values == u.values);
  }
  SECTION("sphere") {
    const MeshGeometry mesh = build_sphere(6, 8);
    Field u = mesh.make_field();
    for (int i = 0; i < mesh.node_count(); ++i) {
      u.values[static_cast<std::size_t>(i)] = std::exp(std::sin(0.31 * i));
    }
    write_snapshot((dir / "s.dat").string(), mesh, 4.125, u);
    const Snapshot snap = read_snapshot((dir / "s.dat").string());
    REQUIRE(snap.mesh == mesh.tag());
    REQUIRE(snap.t == 4.125);
    REQUIRE(snap.values == u.values);
  }
  SECTION("header format is pinned") {
    const MeshGeometry mesh = build_torus(8);
    write_snapshot((dir / "h.dat").string(), mesh, 0.5, mesh.make_field(1.0));
    const std::string text = read_file(dir / "h.dat");
    REQUIRE(text.rfind("mesh torus 8\nt 0.5\n1,1,1,1,1,1,1,1\n", 0) == 0);
    REQUIRE(text.find("\r") == std::string::npos);
  }
  SECTION("value count must match the mesh") {
    const MeshGeometry mesh = build_torus(8);
    REQUIRE_THROWS_AS(write_snapshot((dir / "x.dat").string(), mesh.tag(), 0.0,
                                     std::vector<double>(63, 1.0)),
                      ContractViolation);
  }
}

TEST_CASE("malformed snapshot files are rejected with locations", "[cli][io]") {
  const fs::path dir = scratch_dir("badsnaps");
  auto expect_error = [&](const std::string& name, const std::string& text,
                          const std::string& needle) {
    write_file(dir / name, text);
    try {
      read_snapshot((dir / name).string());
      FAIL("expected ConfigError for " + name);
    } catch (const ConfigError& e) {
      INFO(e.what());
      REQUIRE(mentions(e.what(), needle));
    }
  };
  expect_error("kind.dat", "mesh cube 8\nt 0\n", "unknown mesh kind");
  expect_error("size.dat", "mesh torus\nt 0\n", "torus header needs one size");
  expect_error("odd.dat", "mesh torus 7\nt 0\n", "even");
  expect_error("extra.dat", "mesh torus 8 9\nt 0\n", "trailing tokens");
  expect_error("time.dat", "mesh torus 8\nq 0\n", "expected 't <value>'");
  expect_error("badt.dat", "mesh torus 8\nt fast\n", "unparsable time");
  expect_error("short.dat", "mesh torus 4\nt 0\n1,2,3,4\n1,2,3,4\n",
               "missing data row");
  expect_error("narrow.dat", "mesh torus 4\nt 0\n1,2,3\n1,2,3,4\n1,2,3,4\n1,2,3,4\n",
               "column");
  expect_error("wide.dat", "mesh torus 4\nt 0\n1,2,3,4,5\n1,2,3,4\n1,2,3,4\n1,2,3,4\n",
               "trailing characters");
  expect_error("tail.dat",
               "mesh torus 4\nt 0\n1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,3,4\n9\n",
               "unexpected extra data");
  REQUIRE_THROWS_AS(read_snapshot((dir / "absent.dat").string()), ConfigError);
}

TEST_CASE("flow statuses map onto process exit codes", "[cli]") {
  REQUIRE(exit_code_for(FlowStatus::Converged) == 0);
  REQUIRE(exit_code_for(FlowStatus::MaxTimeReached) == 2);
  REQUIRE(exit_code_for(FlowStatus::Blowup) == 3);
  REQUIRE(exit_code_for(FlowStatus::StepUnderflow) == 3);
}

TEST_CASE("run command writes the full artifact set", "[cli][run]") {
  const fs::path dir = scratch_dir("run");
  const ExperimentConfig cfg = quick_run_config((dir / "a").string());
  REQUIRE(cmd_run(cfg) == 0);

  REQUIRE(fs::exists(dir / "a" / "series.csv"));
  REQUIRE(fs::exists(dir / "a" / "final.dat"));
  REQUIRE(fs::exists(dir / "a" / "snap_000.dat"));
  REQUIRE(fs::exists(dir / "a" / "report.txt"));

  const std::string series = read_file(dir / "a" / "series.csv");
  REQUIRE(series.rfind(std::string(csv_header()) + "\n", 0) == 0);

  const std::string report = read_file(dir / "a" / "report.txt");
  REQUIRE(report_value(report, "status") == "Converged");
  REQUIRE(report_value(report, "k_min") == "1");
  REQUIRE(report_value(report, "hypothesis_orbit_gt_rho_over_8pi") == "true");
  REQUIRE(std::stod(report_value(report, "final_residual")) <= 1e-7);
  REQUIRE(std::stod(report_value(report, "mass_drift_max_rel")) <= 1e-10);
  REQUIRE(report_value(report, "energy_violations") == "0");
  REQUIRE(std::stol(report_value(report, "step_count")) > 0);
  REQUIRE_FALSE(report_value(report, "reject_count").empty());
  REQUIRE_FALSE(report_value(report, "dissipation_decay_exponent").empty());
  REQUIRE_FALSE(report_value(report, "final_concentration_fraction").empty());

  const Snapshot final_snap = read_snapshot((dir / "a" / "final.dat").string());
  REQUIRE(final_snap.mesh == MeshTag{MeshKind::Torus, 16, 16});
  REQUIRE(final_snap.t > 0.0);

  SECTION("a rerun reproduces series.csv byte for byte") {
    ExperimentConfig again = cfg;
    again.output_dir = (dir / "b").string();
    REQUIRE(cmd_run(again) == 0);
    REQUIRE(read_file(dir / "b" / "series.csv") == series);
    REQUIRE(read_file(dir / "b" / "final.dat") ==
            read_file(dir / "a" / "final.dat"));
  }
}

TEST_CASE("run command reports terminal statuses through exit codes",
          "[cli][run]") {
  const fs::path dir = scratch_dir("run_status");
  SECTION("time budget exhausted") {
    ExperimentConfig cfg = quick_run_config((dir / "slow").string());
    cfg.flow.rho = 20.0 * kPi;
    cfg.flow.residual_tol = 1e-14;
    cfg.flow.t_max = 0.01;
    REQUIRE(cmd_run(cfg) == 2);
    const std::string report = read_file(dir / "slow" / "report.txt");
    REQUIRE(report_value(report, "status") == "MaxTimeReached");
    REQUIRE(report_value(report, "hypothesis_orbit_gt_rho_over_8pi") == "false");
  }
  SECTION("immediate blowup") {
    ExperimentConfig cfg = quick_run_config((dir / "blow").string());
    cfg.flow.u0_expr = parse_expr("701*cos(x)");
    REQUIRE(cmd_run(cfg) == 3);
    const std::string report = read_file(dir / "blow" / "report.txt");
    REQUIRE(report_value(report, "status") == "Blowup");
  }
  SECTION("invalid flow config exits 1") {
    ExperimentConfig cfg = quick_run_config((dir / "bad").string());
    cfg.flow.record_every = 0;
    REQUIRE(cmd_run(cfg) == 1);
  }
}

TEST_CASE("stationary command writes the solution snapshot", "[cli][stationary]") {
  const fs::path dir = scratch_dir("newton");
  ExperimentConfig cfg = quick_run_config((dir / "a").string());
  REQUIRE(cmd_stationary(cfg) == 0);
  REQUIRE(fs::exists(dir / "a" / "stationary.dat"));
  const Snapshot snap = read_snapshot((dir / "a" / "stationary.dat").string());
  REQUIRE(snap.mesh == MeshTag{MeshKind::Torus, 16, 16});
  REQUIRE(snap.t == 0.0);
  const std::string report = read_file(dir / "a" / "report.txt");
  REQUIRE(report.rfind("iterations ", 0) == 0);
  REQUIRE(mentions(report, "final_residual"));

  SECTION("starved iteration budget exits 3") {
    cfg.output_dir = (dir / "b").string();
    cfg.newton.max_iters = 1;
    cfg.newton.rho_continuation_steps = 1;
    REQUIRE(cmd_stationary(cfg) == 3);
  }
}

TEST_CASE("verify command passes on a healthy setup", "[cli][verify]") {
  ExperimentConfig cfg = quick_run_config("unused");
  REQUIRE(cmd_verify(cfg) == 0);
}

TEST_CASE("verification flags a corrupted quadrature first", "[cli][verify]") {
  MeshGeometry mesh = build_torus(16);
  const FieldExpr f = parse_expr("1 + 0.5*cos(x)");

  const auto healthy = run_verification(mesh, 4.0 * kPi, f);
  REQUIRE(healthy.size() == 6);
  REQUIRE(healthy.front().name == "self_adjointness");
  for (const auto& r : healthy) {
    INFO(r.name << ": " << r.detail);
    REQUIRE(r.pass);
  }

  mesh.quad_weights[3] *= 1.0 + 1e-6;
  const auto corrupted = run_verification(mesh, 4.0 * kPi, f);
  REQUIRE_FALSE(corrupted.front().pass);
}

TEST_CASE("sweep command fans out over rho and collects a table", "[cli][sweep]") {
  const fs::path dir = scratch_dir("sweep");
  ExperimentConfig cfg = quick_run_config((dir / "s").string());
  const std::vector<double> rhos{0.0, 4.0 * kPi};
  REQUIRE(cmd_sweep(cfg, rhos) == 0);

  REQUIRE(fs::exists(dir / "s" / "rho_0" / "series.csv"));
  REQUIRE(fs::exists(dir / "s" / ("rho_" + format_g17(4.0 * kPi)) / "final.dat"));

  const std::string csv = read_file(dir / "s" / "sweep.csv");
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "rho,status,final_residual,max_h1,wall_time");
  REQUIRE(std::getline(in, line));
  REQUIRE(line.rfind("0,Converged,", 0) == 0);
  REQUIRE(std::getline(in, line));
  REQUIRE(line.rfind(format_g17(4.0 * kPi) + ",Converged,", 0) == 0);
  REQUIRE_FALSE(std::getline(in, line));

  SECTION("an empty rho list is a usage error") {
    REQUIRE(cmd_sweep(cfg, {}) == 1);
  }
}

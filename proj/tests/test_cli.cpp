/// \file test_cli.cpp
/// \brief End-to-end exercises of the command-line driver as a real process:
///        exit codes, output files, and hash-stable reruns.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#ifndef BSPHASE_CLI_PATH
#error "BSPHASE_CLI_PATH must point at the driver binary"
#endif

namespace {

namespace fs = std::filesystem;

/// Fresh scratch directory per test process.
const fs::path& scratch_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "bsphase_cli_scratch";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  const fs::path out_file = scratch_root() / "stdout.txt";
  const fs::path err_file = scratch_root() / "stderr.txt";
  const std::string command = std::string(BSPHASE_CLI_PATH) + " " + args +
                              " > " + out_file.string() + " 2> " +
                              err_file.string();
  const int status = std::system(command.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

/// Write a config whose outputs land in a per-name directory; returns
/// {config path, output dir}. The base block can be overridden through the
/// explicit parameters; `extra` appends further keys.
std::pair<std::string, fs::path> write_config(
    const std::string& name, const std::string& extra = "",
    const std::string& shape = "unit_disk", int resolution = 8,
    const std::string& dt = "1e-3", const std::string& T_final = "5e-3") {
  const fs::path out_dir = scratch_root() / (name + "_out");
  const fs::path cfg = scratch_root() / (name + ".ini");
  std::ofstream file(cfg);
  file << "mesh.shape = " << shape << "\n"
       << "mesh.resolution = " << resolution << "\n"
       << "time.dt = " << dt << "\n"
       << "time.T_final = " << T_final << "\n"
       << "output.dir = " << out_dir.string() << "\n"
       << extra;
  return {cfg.string(), out_dir};
}

std::vector<fs::path> files_matching(const fs::path& dir,
                                     const std::string& needle) {
  std::vector<fs::path> hits;
  if (!fs::exists(dir)) return hits;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().filename().string().find(needle) != std::string::npos)
      hits.push_back(entry.path());
  std::sort(hits.begin(), hits.end());
  return hits;
}

int line_count(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

// ===========================================================================
// Happy paths
// ===========================================================================

TEST_CASE("verify passes on the reference configuration with a pass table") {
  const auto [cfg, out_dir] = write_config("verify_ref");
  const CliResult r = run_cli("verify -c " + cfg);
  CHECK(r.code == 0);
  CHECK(r.out.find("all checks passed") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);

  const auto tables = files_matching(out_dir, "verify_");
  REQUIRE(tables.size() == 1);
  const std::vector<std::string> rows = [&] {
    std::vector<std::string> lines;
    std::istringstream in(slurp(tables[0]));
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
  }();
  REQUIRE(rows.size() > 1);
  CHECK(rows[0] == "check,measured,threshold,pass");
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].substr(rows[i].size() - 2) == ",1");
}

TEST_CASE("run writes hash-named outputs and reruns overwrite identically") {
  const auto [cfg, out_dir] = write_config("run_repeat");
  const CliResult first = run_cli("run -c " + cfg);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("config hash") != std::string::npos);

  const auto diagnostics = files_matching(out_dir, "_diagnostics.csv");
  REQUIRE(diagnostics.size() == 1);
  // Five steps at dt = 1e-3 to T = 5e-3, plus the header line.
  CHECK(line_count(diagnostics[0]) == 6);
  // Stride-1 snapshots: the initial state and one per step.
  CHECK(files_matching(out_dir, "_bulk_").size() == 6);
  CHECK(files_matching(out_dir, "_surface_").size() == 6);
  CHECK(files_matching(out_dir, ".vtk").empty());  // off by default

  const std::string diagnostics_bytes = slurp(diagnostics[0]);
  std::set<std::string> names_before;
  for (const auto& entry : fs::directory_iterator(out_dir))
    names_before.insert(entry.path().filename().string());

  const CliResult second = run_cli("run -c " + cfg);
  REQUIRE(second.code == 0);
  std::set<std::string> names_after;
  for (const auto& entry : fs::directory_iterator(out_dir))
    names_after.insert(entry.path().filename().string());

  // Same hash, same names, and (deterministic stepper) identical bytes.
  CHECK(names_after == names_before);
  CHECK(slurp(diagnostics[0]) == diagnostics_bytes);
}

TEST_CASE("a zero horizon emits exactly the initial snapshot") {
  const auto [cfg, out_dir] =
      write_config("run_zero", "", "unit_disk", 8, "1e-3", "0");
  const CliResult r = run_cli("run -c " + cfg);
  CHECK(r.code == 0);
  CHECK(files_matching(out_dir, "_bulk_").size() == 1);
  CHECK(files_matching(out_dir, "_surface_").size() == 1);
  const auto diagnostics = files_matching(out_dir, "_diagnostics.csv");
  REQUIRE(diagnostics.size() == 1);
  CHECK(line_count(diagnostics[0]) == 1);  // header only, no steps
}

TEST_CASE("sweep writes the fitted table for a small window") {
  const auto [cfg, out_dir] =
      write_config("sweep_small", "", "unit_disk", 6, "1e-3", "3e-3");
  const CliResult r = run_cli("sweep -c " + cfg +
                              " --direction K_to_0 --values 1e-2,0.3,10");
  CHECK(r.code == 0);
  CHECK(r.out.find("fitted slope") != std::string::npos);

  const auto tables = files_matching(out_dir, "sweep_K_to_0_");
  REQUIRE(tables.size() == 1);
  const std::string csv = slurp(tables[0]);
  CHECK(csv.find("parameter,quantity,slope_so_far") == 0);
  CHECK(csv.find("# direction=K_to_0") != std::string::npos);
  CHECK(csv.find("label=exploratory") == std::string::npos);
}

TEST_CASE("sweeps with non-constant mobilities carry the exploratory label") {
  const auto [cfg, out_dir] = write_config("sweep_exploratory",
                                           "mobility_bulk.name = capped_quadratic\n"
                                           "mobility_bulk.value = 0.2\n"
                                           "time.snapshot_stride = 1000000\n");
  const CliResult r = run_cli("sweep -c " + cfg +
                              " --direction K_to_0 --values 1e-2,0.3,10");
  CHECK(r.code == 0);
  const auto tables = files_matching(out_dir, "sweep_K_to_0_");
  REQUIRE(tables.size() == 1);
  CHECK(slurp(tables[0]).find("# label=exploratory") != std::string::npos);
  CHECK(r.out.find("exploratory") != std::string::npos);
}

TEST_CASE("cdep reports the zero-perturbation row as exactly zero") {
  const auto [cfg, out_dir] = write_config("cdep_smoke",
                                           "initial.name = random_smooth\n"
                                           "initial.seed = 3\n"
                                           "initial.modes = 2\n");
  const CliResult r = run_cli("cdep -c " + cfg + " --deltas 0,1e-2,1e-1");
  CHECK(r.code == 0);
  const auto tables = files_matching(out_dir, "cdep_");
  REQUIRE(tables.size() == 1);
  const std::string csv = slurp(tables[0]);
  CHECK(csv.find("delta,max_dual_norm\n0,0\n") != std::string::npos);
}

TEST_CASE("mesh-info reports geometry and dumps assembled operators") {
  const auto [cfg, out_dir] = write_config("mesh_report");
  const CliResult r = run_cli("mesh-info -c " + cfg);
  CHECK(r.code == 0);
  CHECK(r.out.find("bulk vertices") != std::string::npos);
  CHECK(r.out.find("perimeter") != std::string::npos);
  CHECK(files_matching(out_dir, "matrices_").empty());

  const CliResult dumped = run_cli("mesh-info -c " + cfg + " --dump-matrices");
  CHECK(dumped.code == 0);
  // One coordinate file per operator: both masses, both stiffnesses, trace.
  CHECK(files_matching(out_dir, "matrices_").size() == 5);
}

// ===========================================================================
// Failure modes and exit codes
// ===========================================================================

TEST_CASE("configuration problems exit with code 2") {
  SUBCASE("unknown key") {
    const auto [cfg, out_dir] = write_config("bad_key", "bogus.key = 1\n");
    const CliResult r = run_cli("run -c " + cfg);
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown key") != std::string::npos);
  }
  SUBCASE("missing required key") {
    const fs::path cfg = scratch_root() / "missing_dt.ini";
    std::ofstream(cfg) << "mesh.shape = unit_disk\nmesh.resolution = 8\n"
                          "time.T_final = 1\n";
    CHECK(run_cli("run -c " + cfg.string()).code == 2);
  }
  SUBCASE("nonexistent config file") {
    CHECK(run_cli("run -c /no/such/file.ini").code == 2);
  }
  SUBCASE("sweep with fewer than three values") {
    const auto [cfg, out_dir] = write_config("sweep_two");
    const CliResult r =
        run_cli("sweep -c " + cfg + " --direction K_to_0 --values 1,0.1");
    CHECK(r.code == 2);
    CHECK(r.err.find("three") != std::string::npos);
  }
  SUBCASE("rotation velocity on a square mesh") {
    const auto [cfg, out_dir] = write_config(
        "square_rotation",
        "velocity.name = rotation\nvelocity.magnitude = 1\n", "unit_square", 8,
        "1e-3", "1e-3");
    CHECK(run_cli("run -c " + cfg).code == 2);
  }
}

TEST_CASE("command-line misuse exits with code 2 and help exits 0") {
  CHECK(run_cli("").code == 2);                      // a subcommand is required
  CHECK(run_cli("run").code == 2);                   // --config is required
  CHECK(run_cli("sweep -c nowhere.ini").code == 2);  // --direction, --values
  CHECK(run_cli("cdep -c nowhere.ini --deltas 0.1 --mode sideways").code == 2);
  CHECK(run_cli("verify -c nowhere.ini --suite everything").code == 2);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("run --help").code == 0);
}

TEST_CASE("solver failures exit with code 3") {
  // One enormous implicit step with a single Newton iteration cannot reach
  // the residual tolerance, so the step (and the run) fails.
  const auto [cfg, out_dir] =
      write_config("diverge", "scheme.newton_max_iters = 1\n", "unit_disk", 8,
                   "50", "50");
  const CliResult r = run_cli("run -c " + cfg);
  CHECK(r.code == 3);
  CHECK(r.err.find("solver error") != std::string::npos);
}

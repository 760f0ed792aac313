#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "attnflow/errors.hpp"
#include "attnflow/harness/experiment.hpp"
#include "attnflow/harness/sweep.hpp"
#include "attnflow/harness/verify.hpp"
#include "attnflow/thresholds.hpp"

using namespace attnflow;
using namespace attnflow::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("attnflow_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("spec validation lists the offending fields") {
  ExperimentSpec spec = default_spec(Scenario::custom);
  spec.n = 1;
  spec.dt = 0.0;
  spec.beta = -1.0;
  try {
    spec.validate();
    FAIL("expected SpecValidationError");
  } catch (const SpecValidationError& e) {
    const auto& f = e.fields();
    CHECK(std::find(f.begin(), f.end(), "n") != f.end());
    CHECK(std::find(f.begin(), f.end(), "dt") != f.end());
    CHECK(std::find(f.begin(), f.end(), "beta") != f.end());
  }
}

TEST_CASE("scenario defaults carry the documented parameter sets") {
  const ExperimentSpec entropy = default_spec(Scenario::entropy_phases);
  CHECK(entropy.lambdas == std::vector<double>{1.0});
  CHECK(entropy.beta == 1.5);
  CHECK(entropy.n == 8);
  CHECK(entropy.gamma0 == 0.05);

  const ExperimentSpec super = default_spec(Scenario::superadditivity);
  CHECK(super.beta == 1.0);
  CHECK(super.n == 8);
  CHECK(super.head_count == 4);
  double total = 0.0;
  for (double l : super.lambdas) total += l;
  CHECK(total == doctest::Approx(16.0));

  const ExperimentSpec relu = default_spec(Scenario::relu_vs_softmax);
  CHECK(relu.lambdas == std::vector<double>{1.0});
  CHECK(relu.beta == 1.0);
  CHECK(relu.gamma0 == 0.05);

  const ExperimentSpec conv = default_spec(Scenario::convergence);
  CHECK(conv.lambdas == std::vector<double>{0.5, 1.5});
  CHECK(conv.gamma0 == 0.8);

  const ExperimentSpec align = default_spec(Scenario::alignment_energy);
  CHECK(align.n == 8);
  CHECK(align.d == 20);
  CHECK(align.head_count == 2);
}

TEST_CASE("experiment spec round-trips through JSON") {
  ExperimentSpec spec = default_spec(Scenario::convergence);
  spec.seed = 77;
  spec.dt = 5e-4;
  const nlohmann::json j = spec;
  const ExperimentSpec back = j.get<ExperimentSpec>();
  CHECK(back.scenario == spec.scenario);
  CHECK(back.n == spec.n);
  CHECK(back.lambdas == spec.lambdas);
  CHECK(back.seed == spec.seed);
  CHECK(back.dt == spec.dt);
  CHECK(back.outputs == spec.outputs);
}

TEST_CASE("run_scenario emits declared, deterministic files") {
  const fs::path dir1 = temp_dir("det1");
  const fs::path dir2 = temp_dir("det2");

  ExperimentSpec spec = default_spec(Scenario::convergence);
  spec.out_dir = dir1.string();
  const RunResult r1 = run_scenario(spec);
  spec.out_dir = dir2.string();
  const RunResult r2 = run_scenario(spec);

  REQUIRE(r1.files.size() == r2.files.size());
  for (size_t k = 0; k < r1.files.size(); ++k)
    CHECK(slurp(r1.files[k]) == slurp(r2.files[k]));

  // Manifest declares every CSV with a column schema matching the header.
  nlohmann::json manifest;
  std::ifstream(dir1 / "manifest.json") >> manifest;
  CHECK(manifest.at("version").get<std::string>() == std::string(kVersion));
  for (const auto& file : manifest.at("files")) {
    const fs::path csv = dir1 / file.at("name").get<std::string>();
    CHECK(fs::exists(csv));
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    size_t commas = std::count(header.begin(), header.end(), ',');
    CHECK(commas + 1 == file.at("columns").size());
  }

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("relu_vs_softmax scenario reproduces the clustering-time separation") {
  const fs::path dir = temp_dir("relu");
  ExperimentSpec spec = default_spec(Scenario::relu_vs_softmax);
  spec.out_dir = dir.string();
  run_scenario(spec);

  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;
  const double ratio = manifest.at("results").at("ratio").get<double>();
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.0);
  fs::remove_all(dir);
}

TEST_CASE("entropy scenario saturates at log n") {
  const fs::path dir = temp_dir("entropy");
  ExperimentSpec spec = default_spec(Scenario::entropy_phases);
  spec.out_dir = dir.string();
  run_scenario(spec);
  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;
  const double final_entropy = manifest.at("results").at("final_entropy_mean").get<double>();
  CHECK(final_entropy == doctest::Approx(std::log(8.0)).epsilon(1e-7));
  fs::remove_all(dir);
}

TEST_CASE("convergence scenario fits the shared per-head gap rate") {
  const fs::path dir = temp_dir("conv");
  ExperimentSpec spec = default_spec(Scenario::convergence);
  spec.out_dir = dir.string();
  run_scenario(spec);
  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;
  const double expected = manifest.at("results").at("expected_rate").get<double>();
  CHECK(expected == doctest::Approx(4.0));
  for (const auto& rate : manifest.at("results").at("gap_rates"))
    CHECK(std::abs(rate.get<double>() - expected) / expected <= 0.10);
  fs::remove_all(dir);
}

TEST_CASE("Lambda sweep reproduces the rate law with unit slope") {
  ExperimentSpec base = default_spec(Scenario::convergence);
  const SweepResult result = sweep(base, "Lambda", {1.0, 2.0, 4.0, 8.0});
  for (const SweepPoint& p : result.points) {
    REQUIRE(p.error.empty());
    CHECK(std::abs(p.metrics[2] - 1.0) <= 0.05);  // fitted / (2 Lambda)
  }
}

TEST_CASE("verification report") {
  SUBCASE("JSON round trip is lossless") {
    VerificationReport rep;
    rep.checks.push_back({"alpha", "first check", 1e-9, 1e-6, true});
    rep.checks.push_back({"beta", "second check", 2.0, 1.0, false});
    rep.passed = 1;
    rep.failed = 1;
    rep.worst_residual = 2.0;
    rep.worst_check = "beta";
    const nlohmann::json j = rep;
    const VerificationReport back = verification_report_from_json(j);
    CHECK(back.checks.size() == rep.checks.size());
    for (size_t k = 0; k < rep.checks.size(); ++k) {
      CHECK(back.checks[k].name == rep.checks[k].name);
      CHECK(back.checks[k].detail == rep.checks[k].detail);
      CHECK(back.checks[k].residual == rep.checks[k].residual);
      CHECK(back.checks[k].tolerance == rep.checks[k].tolerance);
      CHECK(back.checks[k].pass == rep.checks[k].pass);
    }
    CHECK(back.passed == rep.passed);
    CHECK(back.failed == rep.failed);
    CHECK(back.worst_residual == rep.worst_residual);
    CHECK(back.worst_check == rep.worst_check);
  }
  SUBCASE("a zero tolerance fails any nonzero residual") {
    VerificationCheck c{"tampered", "", 1e-15, 0.0, 1e-15 <= 0.0};
    CHECK_FALSE(c.pass);
  }
}

TEST_CASE("beta sweep flips radial dominance at the critical temperature") {
  ExperimentSpec base = default_spec(Scenario::custom);
  base.n = 8;
  base.d = 8;
  base.lambdas = {1.0, 1.0};
  base.head_count = 2;
  base.gamma0 = 0.0;

  const double beta_star = critical_beta(1.0, 2, 8);
  std::vector<double> grid;
  for (int k = -4; k <= 4; ++k) {
    if (k == 0) continue;  // knife edge: the margin is exactly zero there
    grid.push_back(beta_star * (1.0 + 0.01 * k));
  }

  const SweepResult result = sweep(base, "beta", grid);
  REQUIRE(result.points.size() == grid.size());
  for (size_t k = 0; k < result.points.size(); ++k) {
    REQUIRE(result.points[k].error.empty());
    const bool ok = result.points[k].metrics[1] != 0.0;
    CHECK(ok == (grid[k] <= beta_star));
  }
}

TEST_CASE("sweep records per-point failures and continues") {
  ExperimentSpec base = default_spec(Scenario::superadditivity);
  // spread = 8 drives the smallest strength negative, which must fail in-row.
  const SweepResult result = sweep(base, "spread", {0.5, 8.0, 1.0});
  REQUIRE(result.points.size() == 3);
  CHECK(result.points[0].error.empty());
  CHECK_FALSE(result.points[1].error.empty());
  CHECK(result.points[2].error.empty());
  CHECK(result.points[2].metrics[0] > 0.0);

  const Table t = result.to_table();
  CHECK(t.rows.size() == 3);
  CHECK(t.columns.front().name == "spread");
}

TEST_CASE("unsupported sweep pairs are rejected") {
  ExperimentSpec base = default_spec(Scenario::entropy_phases);
  CHECK_THROWS_AS(sweep(base, "beta", {1.0}), SpecValidationError);
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drm/cli.hpp"

using namespace drm;
using namespace drm::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "drm_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = main_entry(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

}  // namespace

TEST_CASE("spec validation aggregates every violation") {
  RunSpec s;
  s.width = 0;
  s.layers = -1;
  s.lr = 0;
  s.problem = "Twin2D_Reg";
  s.activation = "relu";
  const auto v = violations(s);
  CHECK(v.size() == 4);
  try {
    validate(s);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("width") != std::string::npos);
    CHECK(msg.find("layers") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("resolve applies dimension dependent defaults") {
  RunSpec s;
  s.problem = "Twin2D";
  s.fourier_i = 2;
  const ResolvedRun r = resolve(s);
  CHECK(r.network.activation.kind == ActivationKind::SmoothSqrt);
  CHECK(r.network.input_dim == 6);
  CHECK(r.train.sampling == Sampling::FixedPool);
  CHECK(std::get<VariationalProblem>(r.problem).lambda == 500.0);
  s.problem = "ConvexSurrogate";
  s.fourier_i.reset();
  CHECK(std::get<ConvexSurrogate>(resolve(s).problem).lambda == 0.0);
}

TEST_CASE("presets encode the full-scale runs") {
  const RunSpec f = preset("fig3b");
  CHECK(f.problem == "DW1D");
  CHECK(f.fourier_i == 3);
  CHECK(f.layers == 5);
  CHECK(f.epochs == 100000);
  CHECK(preset("fig9d").eps == 0.1 / 4);
  CHECK(preset("fig8a").problem == "Twin2D_Reg");
  for (const auto& [name, spec] : presets()) CHECK(violations(spec).empty());
  CHECK_THROWS_AS(preset("fig42"), Error);
}

TEST_CASE("config file then flags, flags win") {
  const fs::path dir = fresh("cfg");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "run.json");
    out << R"({"preset": "fig3a", "width": 32, "epochs": 10, "seed": 9})";
  }
  SpecFlags flags;
  CLI::App app;
  flags.attach(app);
  std::vector<std::string> argv{"--width", "16", "--config", (dir / "run.json").string()};
  std::reverse(argv.begin(), argv.end());
  app.parse(argv);
  const RunSpec s = flags.build();
  CHECK(s.fourier_i == 2);
  CHECK(s.width == 16);
  CHECK(s.epochs == 10);
  CHECK(s.seed == 9);

  RunSpec t;
  CHECK_THROWS_AS(apply_json(t, nlohmann::json::parse(R"({"widht": 3, "epochs": "many"})")), Error);
}

TEST_CASE("train writes artifacts, is deterministic and refuses to overwrite") {
  const fs::path a = fresh("train_a"), b = fresh("train_b");
  const std::vector<std::string> common{"train", "--layers", "2", "--width", "16", "--epochs", "200", "--seed", "3"};
  auto with_out = [&](const fs::path& p) {
    auto v = common;
    v.push_back("--out");
    v.push_back(p.string());
    return v;
  };
  REQUIRE(run(with_out(a)) == 0);
  REQUIRE(run(with_out(b)) == 0);
  for (const char* f : {"manifest.json", "loss_history.csv", "checkpoint.bin", "fields.csv", "transitions.json",
                        "energy.json", "spec.json"})
    CHECK(fs::exists(a / f));
  CHECK(slurp(a / "loss_history.csv") == slurp(b / "loss_history.csv"));
  CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));

  const RunManifest m = manifest_from_json(read_json(a / "manifest.json"));
  CHECK(m.epochs_completed == 200);
  CHECK(read_loss_history(a / "loss_history.csv").size() == 3);
  CHECK(read_fields(a / "fields.csv").size() == 1001);
  CHECK(read_checkpoint(a / "checkpoint.bin").epoch == 200);

  const std::string before = slurp(a / "loss_history.csv");
  std::string err;
  auto again = with_out(a);
  again[6] = "50";
  CHECK(run(again, nullptr, &err) != 0);
  CHECK(err.find("exists") != std::string::npos);
  CHECK(slurp(a / "loss_history.csv") == before);
  again.push_back("--force");
  CHECK(run(again) == 0);
  CHECK(slurp(a / "loss_history.csv") != before);
}

TEST_CASE("invalid specs exit nonzero naming the field") {
  std::string err;
  CHECK(run({"train", "--width", "0", "--out", fresh("bad").string()}, nullptr, &err) == kInvalid);
  CHECK(err.find("width") != std::string::npos);
  CHECK_FALSE(fs::exists(fresh("bad")));
  CHECK(run({"train", "--fourier-i", "2", "--no-fourier", "--out", fresh("bad2").string()}) == kInvalid);
  CHECK(run({"frobnicate"}) == kInvalid);
}

TEST_CASE("ntk self tests") {
  std::string out;
  CHECK(run({"ntk", "--self-test", "constant", "--n", "64"}, &out) == 0);
  CHECK(out.find("lambda_1/n 1") != std::string::npos);
  CHECK(run({"ntk", "--self-test", "brownian", "--n", "512"}, &out) == 0);
  CHECK(std::stod(out.substr(out.find(' ') + 1)) == Catch::Approx(4.0 / (std::numbers::pi * std::numbers::pi)).epsilon(0.02));
}

TEST_CASE("ntk command writes a spectrum and a decay fit") {
  const fs::path dir = fresh("ntk");
  REQUIRE(run({"ntk", "--layers", "1", "--width", "64", "--fourier-i", "0", "--points", "64", "--span", "2",
               "--scalar", "--seeds", "2", "--fit-hi", "32", "--out", dir.string()}) == 0);
  const Eigen::VectorXd ev = read_spectrum(dir / "spectrum.csv");
  CHECK(ev.size() == 64);
  const auto report = read_json(dir / "ntk_report.json");
  CHECK(report.contains("fit"));
  CHECK(report["fit"]["slope"].get<double>() < 0.0);
}

TEST_CASE("sweeps validate values and record failures per row") {
  RunSpec base;
  base.layers = 1;
  base.width = 8;
  base.epochs = 20;
  CHECK_THROWS_AS(run_sweep(base, SweepAxis::Seed, {}, fresh("sweep_empty"), false), Error);
  CHECK_THROWS_AS(run_sweep(base, SweepAxis::Depth, {"2", "x"}, fresh("sweep_bad"), false), Error);
  std::vector<std::string> many(65, "1");
  CHECK_THROWS_AS(run_sweep(base, SweepAxis::Seed, many, fresh("sweep_many"), false), Error);

  const fs::path dir = fresh("sweep_seed");
  const auto rows = run_sweep(base, SweepAxis::Seed, {"1", "2", "3"}, dir, false);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.ok);
  {
    std::ifstream in(dir / "summary.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "run,axis,value,status,final_energy,transitions,runtime_seconds,message");
  }
  for (int i = 0; i < 3; ++i) {
    const auto spec = read_json(dir / ("run_0" + std::to_string(i)) / "spec.json");
    CHECK(spec["width"] == 8);
    CHECK(spec["seed"] == i + 1);
  }

  base.lr = 1e300;
  base.epochs = 50;
  const auto blown = run_sweep(base, SweepAxis::Depth, {"1", "2"}, fresh("sweep_fail"), false);
  REQUIRE(blown.size() == 2);
  for (const auto& r : blown) {
    CHECK_FALSE(r.ok);
    CHECK(r.message.find("non-finite") != std::string::npos);
  }
}

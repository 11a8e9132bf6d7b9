#include <doctest.h>

#include <json.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qlstm/cli.hpp"

using namespace qlstm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "qlstm_cli_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Small, fast pipeline: train then quantize into `dir`.
void train_and_quantize(const fs::path& dir) {
  REQUIRE(run({"--seed", "1", "--out-dir", dir.string(), "train", "--synthetic", "--synthetic-length", "160", "--hidden", "4",
               "--epochs", "2"})
              .code == 0);
  REQUIRE(run({"--out-dir", dir.string(), "quantize"}).code == 0);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    CHECK(run({"--help"}).code == cli::kExitOk);
    CHECK(run({"train", "--help"}).code == cli::kExitOk);
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run({"train", "--hidden", "0"}).code == cli::kExitUsage);
    CHECK(run({"sweep", "--mode", "bogus"}).code == cli::kExitUsage);
    CHECK(run({"report", "--clock-mhz", "0"}).code == cli::kExitUsage);
    CHECK(run({"quantize", "--lut-depth", "100"}).code == cli::kExitUsage);
    CHECK(run({"simulate", "--schedule", "pipelined"}).code == cli::kExitUsage);
  }

  TEST_CASE("missing data file") {
    const auto r = run({"--out-dir", fresh_dir("nodata").string(), "train", "--data", "/nonexistent/series.csv"});
    CHECK(r.code == cli::kExitData);
    CHECK(r.err.find("file not found") != std::string::npos);
  }

  TEST_CASE("fixed-point format checks") {
    const fs::path dir = fresh_dir("formats");
    REQUIRE(run({"--out-dir", dir.string(), "train", "--synthetic-length", "128", "--hidden", "2", "--epochs", "1"})
                .code == 0);
    CHECK(run({"--out-dir", dir.string(), "quantize", "--frac", "16", "--total", "16"}).code == cli::kExitUsage);
    CHECK(run({"--out-dir", dir.string(), "quantize", "--frac", "15", "--total", "16"}).code == cli::kExitOk);
  }

  TEST_CASE("report defaults") {
    const fs::path dir = fresh_dir("report");
    const auto r = run({"--out-dir", dir.string(), "report"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(j["cycles"]["n_total"] == 5332);
    CHECK(j["estimated"]["t_model_us"].get<double>() == doctest::Approx(53.32));
    CHECK(j["resources"]["dsp_slices"] == 8);
    CHECK(r.out.find("5332") != std::string::npos);

    REQUIRE(run({"--out-dir", dir.string(), "report", "--measured-us", "57.25"}).code == 0);
    const auto m = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(m["measured"]["gops"].get<double>() == doctest::Approx(0.363).epsilon(0.005));
  }

  TEST_CASE("train, quantize, simulate") {
    const fs::path dir = fresh_dir("pipeline");
    train_and_quantize(dir);
    CHECK(fs::exists(dir / "model.json"));
    CHECK(slurp(dir / "loss.csv").rfind("epoch,loss\n", 0) == 0);
    CHECK(fs::exists(dir / "quantized" / "manifest.json"));

    REQUIRE(run({"--out-dir", dir.string(), "simulate", "--schedule", "parallel", "--check"}).code == 0);
    REQUIRE(run({"--out-dir", dir.string(), "simulate", "--schedule", "sequential", "--check"}).code == 0);
    const auto par = nlohmann::json::parse(slurp(dir / "simulate_parallel.json"));
    const auto seq = nlohmann::json::parse(slurp(dir / "simulate_sequential.json"));
    CHECK(par["outputs_raw"] == seq["outputs_raw"]);
    CHECK(par["trace"]["total_cycles"].get<long>() < seq["trace"]["total_cycles"].get<long>());
    CHECK(par["outputs_denormalized"].is_array());

    REQUIRE(run({"--out-dir", dir.string(), "report", "--model", (dir / "quantized").string()}).code == 0);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["model"]["hidden_size"] == 4);
  }

  TEST_CASE("simulate without a manifest") {
    const auto r = run({"--out-dir", fresh_dir("nomanifest").string(), "simulate"});
    CHECK(r.code == cli::kExitData);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("sweeps") {
    const fs::path dir = fresh_dir("sweep");
    REQUIRE(run({"--out-dir", dir.string(), "train", "--synthetic-length", "160", "--hidden", "3", "--epochs", "1"})
                .code == 0);
    const auto f = run({"--out-dir", dir.string(), "sweep", "--mode", "frac", "--synthetic-length", "160",
                        "--frac-range", "4:6", "--gnuplot"});
    REQUIRE(f.code == 0);
    const std::string csv = slurp(dir / "sweep_frac.csv");
    CHECK(csv.rfind("x,mse\n4,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(fs::exists(dir / "sweep_frac.dat"));
    const auto d = run({"--out-dir", dir.string(), "sweep", "--mode", "lutdepth", "--synthetic-length", "160",
                        "--depths", "64,256"});
    REQUIRE(d.code == 0);
    CHECK(slurp(dir / "sweep_lutdepth.csv").rfind("depth,mse\n64,", 0) == 0);
    CHECK(run({"--out-dir", dir.string(), "sweep", "--mode", "frac", "--frac-range", "9:4"}).code ==
          cli::kExitUsage);
  }

  TEST_CASE("the same seed gives the same artifacts") {
    const fs::path a = fresh_dir("seed_a");
    const fs::path b = fresh_dir("seed_b");
    train_and_quantize(a);
    train_and_quantize(b);
    const auto ma = nlohmann::json::parse(slurp(a / "quantized" / "manifest.json"));
    const auto mb = nlohmann::json::parse(slurp(b / "quantized" / "manifest.json"));
    CHECK(ma["content_sha256"] == mb["content_sha256"]);
    // Golden value for libstdc++'s mt19937_64 / normal_distribution.
    CHECK(ma["content_sha256"] == "3631d619bc1d42a335c2da625bba8046b008f5941efa0d006290b959b1b95c39");
    CHECK(slurp(a / "model.json") == slurp(b / "model.json"));
  }
}

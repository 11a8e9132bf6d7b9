#include <doctest.h>

#include <json.hpp>
#include <cmath>
#include <sstream>

#include "qlstm/error.hpp"
#include "qlstm/perf.hpp"

using namespace qlstm;
using model::ModelConfig;

namespace {
const ModelConfig kBaseline{1, 20, 6, 1};
const fxp::Format kQ8_16 = fxp::Format::make(8, 16);
}  // namespace

TEST_SUITE("perf-model") {
  TEST_CASE("cycle counts") {
    const auto c = perf::cycles(kBaseline);
    CHECK(c.n_ll == 5292);
    CHECK(c.n_dense == 40);
    CHECK(c.n_total == 5332);
    const auto one = perf::cycles(ModelConfig{1, 1, 1, 1});
    CHECK(one.n_ll == 8);
    CHECK(one.n_dense == 2);
    CHECK(one.n_total == 10);
    const auto twelve = perf::cycles(ModelConfig{1, 12, 6, 1});
    CHECK(twelve.n_ll == 2028);
    CHECK(twelve.n_dense == 24);
    CHECK(twelve.n_total == 2052);
    CHECK_THROWS_AS(perf::cycles(ModelConfig{1, 0, 6, 1}), InvalidArgument);
  }

  TEST_CASE("cycle counts grow with every dimension") {
    for (int ni = 1; ni <= 3; ++ni) {
      for (int nh = 1; nh <= 8; ++nh) {
        for (int ns = 1; ns <= 4; ++ns) {
          const auto base = perf::cycles(ModelConfig{ni, nh, ns, 1}).n_total;
          CHECK(perf::cycles(ModelConfig{ni + 1, nh, ns, 1}).n_total > base);
          CHECK(perf::cycles(ModelConfig{ni, nh + 1, ns, 1}).n_total > base);
          CHECK(perf::cycles(ModelConfig{ni, nh, ns + 1, 1}).n_total > base);
          CHECK(perf::cycles(ModelConfig{ni, nh, ns, 2}).n_total > base);
        }
      }
    }
  }

  TEST_CASE("latency and throughput") {
    const auto t = perf::latency_throughput(5332, perf::ClockConfig{});
    CHECK(t.t_model_s * 1e6 == doctest::Approx(53.32).epsilon(1e-12));
    CHECK(std::floor(t.inferences_per_second) == 18754);
    const auto half = perf::latency_throughput(5332, perf::ClockConfig::from_mhz(50));
    CHECK(half.t_model_s * 1e6 == doctest::Approx(106.64).epsilon(1e-12));
    CHECK(std::floor(perf::measured_timing(57.25e-6).inferences_per_second) == 17467);
    CHECK_THROWS_AS(perf::ClockConfig::from_mhz(0), InvalidArgument);
    CHECK_THROWS_AS(perf::latency_throughput(0, perf::ClockConfig{}), InvalidArgument);
    CHECK_THROWS_AS(perf::measured_timing(0.0), InvalidArgument);
    CHECK(perf::kMeasuredInferenceUs - perf::kEstimatedInferenceUs == doctest::Approx(perf::kMeasuredOverheadUs));
  }

  TEST_CASE("operation count") {
    const auto p = perf::op_count(kBaseline);
    CHECK(p.macs == 10340);
    CHECK(p.multiplies == 120);
    CHECK(p.ops == 20800);
    const auto one = perf::op_count(ModelConfig{1, 1, 1, 1});
    CHECK(one.macs == 11);
    CHECK(one.multiplies == 1);
    CHECK(one.ops == 23);
  }

  TEST_CASE("efficiency") {
    const auto m = perf::efficiency(20800, 57.25e-6, 71.0);
    CHECK(m.gops == doctest::Approx(0.363).epsilon(0.005));
    CHECK(m.energy_per_inference_uj == doctest::Approx(4.06).epsilon(0.02));
    CHECK(m.gop_per_joule == doctest::Approx(5.12).epsilon(0.01));
    CHECK(perf::efficiency(20800, 53.32e-6, 71.0).energy_per_inference_uj == doctest::Approx(3.79).epsilon(0.02));
    CHECK(perf::efficiency(1, 1.0, 1000.0).energy_per_inference_uj == 1e6);
    CHECK_THROWS_AS(perf::efficiency(1, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(perf::efficiency(1, 0.0, 1.0), InvalidArgument);
  }

  TEST_CASE("efficiency scales linearly") {
    const auto a = perf::efficiency(20800, 57.25e-6, 71.0);
    const auto b = perf::efficiency(41600, 57.25e-6, 71.0);
    const auto c = perf::efficiency(20800, 57.25e-6, 142.0);
    CHECK(b.gops == doctest::Approx(2.0 * a.gops));
    CHECK(c.energy_per_inference_uj == doctest::Approx(2.0 * a.energy_per_inference_uj));
    CHECK(c.gop_per_joule == doctest::Approx(a.gop_per_joule / 2.0));
  }

  TEST_CASE("resources") {
    const auto r = perf::resources(kBaseline, kQ8_16, 256);
    CHECK(r.dsp_slices == 8);
    CHECK(r.param_words == 1781);
    CHECK(r.lut_words == 512);
    CHECK(r.state_words == 46);
    CHECK(perf::resources(kBaseline, kQ8_16, 256, 1).dsp_slices == 6);
    CHECK_THROWS_AS(perf::resources(kBaseline, kQ8_16, 256, 0), InvalidArgument);
  }

  TEST_CASE("power profiles") {
    CHECK(perf::kXC7S15.total_mw() == 70.0);
    CHECK(perf::kXC7S25.total_mw() == 130.0);
  }

  TEST_CASE("report") {
    const auto r = perf::make_report(kBaseline, perf::ClockConfig{}, 71.0, 57.25, kQ8_16, 256, 3);
    const auto j = nlohmann::json::parse(perf::report_to_json(r));
    CHECK(j["cycles"]["n_total"] == 5332);
    CHECK(j["estimated"]["inferences_per_second_floor"] == 18754);
    CHECK(j["measured"]["gops"].get<double>() == doctest::Approx(0.363).epsilon(0.005));
    CHECK(j["resources"]["dsp_slices"] == 8);
    CHECK(j["ops"]["ops_per_inference"] == 20800);
    const auto no_meas = perf::make_report(kBaseline, perf::ClockConfig{}, 71.0, std::nullopt, kQ8_16, 256, 3);
    CHECK(nlohmann::json::parse(perf::report_to_json(no_meas))["measured"].is_null());
    std::ostringstream os;
    perf::print_report_table(os, r);
    CHECK(os.str().find("GOP/s") != std::string::npos);
  }
}

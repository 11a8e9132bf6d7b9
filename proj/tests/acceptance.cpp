// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracle.hpp"
#include "qlstm/artifact.hpp"
#include "qlstm/datapath.hpp"
#include "qlstm/perf.hpp"
#include "qlstm/quantizer.hpp"
#include "qlstm/training.hpp"

using namespace qlstm;
using model::ModelConfig;
namespace fs = std::filesystem;

namespace {

const ModelConfig kBaseline{1, 20, 6, 1};
const fxp::Format kQ8_16 = fxp::Format::make(8, 16);
constexpr int kSyntheticLength = 8064;  // 28 days at 5-minute resolution

// Pinned tolerances.
constexpr double kGopsRelTol = 0.005;
constexpr double kEnergyRelTol = 0.02;
constexpr double kGopPerJouleLo = 5.0;
constexpr double kGopPerJouleHi = 5.4;
constexpr double kCycleRelTol = 0.05;
constexpr std::int64_t kRecursionLo = 860;
constexpr std::int64_t kRecursionHi = 900;
constexpr double kMinSpeedup = 4.0;
constexpr double kGateFraction = 0.971;
constexpr double kGateFractionTol = 0.02;
constexpr double kDenseFraction = 0.006;
constexpr double kDenseFractionTol = 0.004;
constexpr double kGradRelTol = 1e-5;
constexpr double kMonotoneSlack = 0.05;
constexpr double kPlateauRelTol = 0.1;
constexpr double kSigmoidLutMaxErr = 0.018;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Detail {
 public:
  void check(bool ok, const std::string& what) {
    pass_ = pass_ && ok;
    if (!ok) failures_ += (failures_.empty() ? "" : "; ") + what;
  }
  template <typename... Args>
  void note(const char* fmt, Args... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    notes_ += (notes_.empty() ? "" : ", ") + std::string(buf);
  }
  Outcome done() const {
    return {pass_, failures_.empty() ? notes_ : notes_ + " | FAILED: " + failures_};
  }

 private:
  bool pass_ = true;
  std::string notes_;
  std::string failures_;
};

bool rel_close(double v, double target, double tol) { return std::abs(v - target) <= tol * std::abs(target); }

Outcome c1_analytic_cycles() {
  Detail d;
  const auto c = perf::cycles(kBaseline);
  d.note("n_ll=%lld n_dense=%lld n_total=%lld", static_cast<long long>(c.n_ll), static_cast<long long>(c.n_dense),
         static_cast<long long>(c.n_total));
  d.check(c.n_ll == 5292 && c.n_dense == 40 && c.n_total == 5332, "expected 5292/40/5332");
  return d.done();
}

Outcome c2_latency_throughput() {
  Detail d;
  const auto t = perf::latency_throughput(perf::cycles(kBaseline).n_total, perf::ClockConfig::from_mhz(100));
  const double us = t.t_model_s * 1e6;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", us);
  d.note("t=%s us, %.0f inferences/s", buf, std::floor(t.inferences_per_second));
  d.check(std::string(buf) == "53.32", "latency != 53.32 us");
  d.check(std::floor(t.inferences_per_second) == 18754.0, "throughput != 18754/s");
  return d.done();
}

Outcome c3_gop_energy() {
  Detail d;
  const auto ops = perf::op_count(kBaseline).ops;
  const auto meas = perf::efficiency(ops, perf::kMeasuredInferenceUs * 1e-6, perf::kDefaultPowerMw);
  const auto est = perf::efficiency(ops, perf::kEstimatedInferenceUs * 1e-6, perf::kDefaultPowerMw);
  d.note("ops=%lld GOP/s=%.4f GOP/J=%.3f E_est=%.3f uJ E_meas=%.3f uJ", static_cast<long long>(ops), meas.gops,
         meas.gop_per_joule, est.energy_per_inference_uj, meas.energy_per_inference_uj);
  d.check(ops == 20800, "op count != 20800");
  d.check(rel_close(meas.gops, 0.363, kGopsRelTol), "GOP/s outside 0.363 +- 0.5%");
  d.check(meas.gop_per_joule >= kGopPerJouleLo && meas.gop_per_joule <= kGopPerJouleHi, "GOP/J outside [5.0, 5.4]");
  d.check(rel_close(est.energy_per_inference_uj, 3.79, kEnergyRelTol), "estimated energy outside 3.79 uJ +- 2%");
  d.check(rel_close(meas.energy_per_inference_uj, 4.06, kEnergyRelTol), "measured energy outside 4.06 uJ +- 2%");
  d.check(rel_close(meas.energy_per_inference_uj, 4.1, kEnergyRelTol), "measured energy outside 4.1 uJ +- 2%");
  return d.done();
}

sim::SimResult simulate_seeded(const ModelConfig& cfg, sim::Schedule s, std::uint64_t seed) {
  const auto qm = fixtures::random_qmodel(cfg, seed);
  return sim::simulate(qm, fixtures::random_qinputs(cfg, seed + 1), sim::DatapathConfig::for_schedule(cfg, s));
}

Outcome c4_datapath_cycles() {
  Detail d;
  double worst = 0.0;
  for (int nh : {3, 8, 12, 20, 32, 64}) {
    const ModelConfig cfg{1, nh, 6, 1};
    const auto r = simulate_seeded(cfg, sim::Schedule::Parallel, 1);
    const auto analytic = perf::cycles(cfg).n_total;
    const double dev = std::abs(static_cast<double>(r.trace.total_cycles - analytic)) / static_cast<double>(analytic);
    worst = std::max(worst, dev);
    d.check(dev <= kCycleRelTol, "n_h=" + std::to_string(nh) + " deviates " + std::to_string(100 * dev) + "%");
  }
  const auto par = simulate_seeded(kBaseline, sim::Schedule::Parallel, 1);
  const auto seq = simulate_seeded(kBaseline, sim::Schedule::Sequential, 1);
  const auto& rec = par.trace.per_recursion;
  const std::int64_t steady = rec.back();
  for (std::size_t t = 1; t < rec.size(); ++t) {
    d.check(rec[t] >= kRecursionLo && rec[t] <= kRecursionHi,
            "recursion " + std::to_string(t) + " takes " + std::to_string(rec[t]) + " cycles");
  }
  const double ratio = static_cast<double>(seq.trace.total_cycles) / static_cast<double>(par.trace.total_cycles);
  d.note("max deviation %.2f%%, steady recursion %lld cycles, seq/par %.3f", 100 * worst,
         static_cast<long long>(steady), ratio);
  d.check(ratio >= kMinSpeedup, "sequential/parallel ratio below 4.0");
  return d.done();
}

Outcome c5_sequential_breakdown() {
  Detail d;
  const auto seq = simulate_seeded(kBaseline, sim::Schedule::Sequential, 1);
  const auto fr = sim::phase_breakdown(seq.trace);
  const double gate = fr.at(sim::Phase::GateMatvec);
  const double dense = fr.at(sim::Phase::Dense);
  d.note("gate-matvec %.4f, dense %.5f (%lld of %lld cycles)", gate, dense,
         static_cast<long long>(seq.trace.phase(sim::Phase::Dense)), static_cast<long long>(seq.trace.total_cycles));
  d.check(std::abs(gate - kGateFraction) <= kGateFractionTol, "gate fraction outside 0.971 +- 0.02");
  d.check(std::abs(dense - kDenseFraction) <= kDenseFractionTol, "dense fraction outside 0.006 +- 0.004");
  return d.done();
}

Outcome c6_equivalence() {
  Detail d;
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto qm = fixtures::random_qmodel(kBaseline, seed);
    const auto xs = fixtures::random_qinputs(kBaseline, seed + 5000);
    const auto ref = quant::q_forward(qm, xs);
    for (sim::Schedule s : {sim::Schedule::Parallel, sim::Schedule::Sequential}) {
      const auto r = sim::simulate(qm, xs, sim::DatapathConfig::for_schedule(kBaseline, s));
      if (!(r.outputs == ref)) ++mismatches;
    }
  }
  d.note("200 runs, %zu mismatches", mismatches);
  d.check(mismatches == 0, "datapath differs from q_forward");
  return d.done();
}

Outcome c7_fxp_oracle() {
  Detail d;
  const fxp::Format f = fxp::Format::make(3, 8);
  std::size_t add_bad = 0, mul_bad = 0, pairs = 0;
  for (std::int64_t a = f.raw_min(); a <= f.raw_max(); ++a) {
    for (std::int64_t b = f.raw_min(); b <= f.raw_max(); ++b) {
      const auto wa = fxp::Word::from_raw(a, f);
      const auto wb = fxp::Word::from_raw(b, f);
      add_bad += fxp::add(wa, wb).raw != oracle::add(a, b, f) ? 1 : 0;
      mul_bad += fxp::mul(wa, wb).raw != oracle::mul(a, b, f) ? 1 : 0;
      ++pairs;
    }
  }
  d.note("%zu pairs, add mismatches %zu, mul mismatches %zu", pairs, add_bad, mul_bad);
  d.check(pairs == 65536 && add_bad == 0 && mul_bad == 0, "fixed-point arithmetic differs from the oracle");
  return d.done();
}

Outcome c8_gradient_check() {
  Detail d;
  const ModelConfig configs[] = {{1, 3, 4, 1}, {1, 1, 1, 1}, {2, 2, 3, 2}, {1, 5, 2, 1}};
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = gradcheck::run(configs[seed % 4], seed);
    worst = std::max(worst, r.worst);
    compared += r.compared;
  }
  d.note("20 models, %zu components, worst relative error %.2e", compared, worst);
  d.check(worst <= kGradRelTol, "relative error above 1e-5");
  return d.done();
}

Outcome c9_quantization_trends() {
  Detail d;
  const auto split = train::make_dataset(train::synth_series(train::SynthKind::SineNoise, kSyntheticLength, 1), 6);
  const auto params = train::train(model::LstmParams::random(kBaseline, 1), kBaseline, train::TrainConfig{}, split.train).params;

  const auto frac = quant::sweep_frac_bits(params, kBaseline, split.test, 4, 12);
  bool monotone = true;
  for (std::size_t k = 1; k < frac.size(); ++k) monotone = monotone && frac[k].mse <= frac[k - 1].mse * (1 + kMonotoneSlack);
  const double m10 = frac[6].mse;
  const double m12 = frac[8].mse;
  d.note("MSE x=4 %.5f x=8 %.5f x=10 %.6f x=12 %.6f", frac[0].mse, frac[4].mse, m10, m12);
  d.check(monotone, "MSE vs fractional bits increases beyond 5% slack");
  d.check(std::abs(m10 - m12) <= kPlateauRelTol * m12, "no plateau between x=10 and x=12");

  const auto base = quant::quantize_model(params, kBaseline, kQ8_16).model;
  const std::vector<int> depths{64, 128, 256};
  const auto lut = quant::sweep_lut_depth(base, depths, split.test);
  d.note("depth 64/128/256 MSE %.6f/%.6f/%.6f", lut[0].mse, lut[1].mse, lut[2].mse);
  d.check(lut[1].mse <= lut[0].mse && lut[2].mse <= lut[1].mse, "MSE vs LUT depth increases");

  const auto sig = quant::build_lut(quant::ActivationKind::Sigmoid, 256, kQ8_16);
  double worst = 0.0;
  constexpr int kGrid = 100000;
  for (int k = 0; k < kGrid; ++k) {
    const auto v = fxp::quantize(quant::kLutInputLo + (quant::kLutInputHi - quant::kLutInputLo) * k / kGrid, kQ8_16);
    worst = std::max(worst, std::abs(quant::lut_lookup(sig, v).value() -
                                     quant::activate(quant::ActivationKind::Sigmoid, v.value())));
  }
  d.note("sigmoid LUT max error %.5f", worst);
  d.check(worst <= kSigmoidLutMaxErr, "sigmoid LUT error above 0.018");
  return d.done();
}

Outcome c10_artifact_roundtrip() {
  Detail d;
  const auto qm = fixtures::random_qmodel(kBaseline, 42);
  const fs::path root = fs::temp_directory_path() / "qlstm_acceptance";
  fs::remove_all(root);
  const auto a = artifact::emit_all(qm, root / "a", std::nullopt, "1970-01-01T00:00:00Z");
  const auto loaded = artifact::load_manifest(root / "a" / artifact::kManifestName);
  std::size_t equal = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto xs = fixtures::random_qinputs(kBaseline, 900 + s);
    equal += quant::q_forward(loaded, xs) == quant::q_forward(qm, xs) ? 1 : 0;
  }
  const auto b = artifact::emit_all(loaded, root / "b", std::nullopt, "1970-01-01T00:00:00Z");
  bool identical = a.files == b.files;
  for (const auto& f : a.files) identical = identical && artifact::sha256_file(root / "b" / f.file) == f.sha256;
  identical = identical && artifact::sha256_file(root / "a" / artifact::kManifestName) ==
                               artifact::sha256_file(root / "b" / artifact::kManifestName);
  fs::remove_all(root);
  d.note("%zu/10 inputs bit-equal, re-emission %s", equal, identical ? "byte-identical" : "differs");
  d.check(equal == 10, "round-trip outputs differ");
  d.check(identical, "re-emitted files differ");
  return d.done();
}

Outcome c11_resources() {
  Detail d;
  const auto r = perf::resources(kBaseline, kQ8_16, quant::kDefaultLutDepth);
  d.note("DSP %d, parameter words %lld", r.dsp_slices, static_cast<long long>(r.param_words));
  d.check(r.dsp_slices == 8 && r.param_words == 1781, "expected 8 DSP slices and 1781 words");
  return d.done();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> fn;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "analytic cycle count", 0.001, c1_analytic_cycles},
      {2, "latency/throughput", 1.0, c2_latency_throughput},
      {3, "GOP and energy", 1.0, c3_gop_energy},
      {4, "datapath cycles", 10.0, c4_datapath_cycles},
      {5, "sequential time breakdown", 5.0, c5_sequential_breakdown},
      {6, "datapath vs q_forward", 60.0, c6_equivalence},
      {7, "fixed-point oracle", 30.0, c7_fxp_oracle},
      {8, "gradient check", 30.0, c8_gradient_check},
      {9, "quantization trends", 300.0, c9_quantization_trends},
      {10, "artifact round-trip", 5.0, c10_artifact_roundtrip},
      {11, "resource accounting", 1.0, c11_resources},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += " | FAILED: runtime over budget";
    }
    std::printf("[%s] %2d %-26s %8.3fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

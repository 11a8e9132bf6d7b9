#include "qlstm/perf.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "qlstm/error.hpp"

namespace qlstm::perf {

ClockConfig ClockConfig::from_mhz(double mhz) {
  if (!(mhz > 0.0) || !std::isfinite(mhz)) throw InvalidArgument("clock frequency must be > 0 MHz");
  return ClockConfig{mhz * 1e6};
}

CycleCounts cycles(const model::ModelConfig& config) {
  config.validate();
  const std::int64_t ni = config.input_size;
  const std::int64_t nh = config.hidden_size;
  const std::int64_t nseq = config.seq_len;
  const std::int64_t no = config.out_features;
  CycleCounts c;
  c.n_ll = nseq * (ni + nh) * 2 * (nh + 1);
  c.n_dense = nh * no * 2;
  c.n_total = c.n_ll + c.n_dense;
  return c;
}

Timing latency_throughput(std::int64_t n_total, const ClockConfig& clock) {
  if (n_total < 1) throw InvalidArgument("cycle count must be >= 1");
  if (!(clock.freq_hz > 0.0)) throw InvalidArgument("clock frequency must be > 0");
  const double t = static_cast<double>(n_total) / clock.freq_hz;
  return Timing{t, 1.0 / t};
}

Timing measured_timing(double t_seconds) {
  if (!(t_seconds > 0.0)) throw InvalidArgument("measured time must be > 0");
  return Timing{t_seconds, 1.0 / t_seconds};
}

OpCount op_count(const model::ModelConfig& config) {
  config.validate();
  const std::int64_t ni = config.input_size;
  const std::int64_t nh = config.hidden_size;
  const std::int64_t nseq = config.seq_len;
  const std::int64_t no = config.out_features;
  OpCount c;
  c.macs = 4 * nseq * (ni + nh) * nh  // gate matvecs
           + 2 * nh * nseq            // f*C + i*g
           + nh * no;                 // dense
  c.multiplies = nh * nseq;           // o * tanh(C)
  c.ops = 2 * c.macs + c.multiplies;
  return c;
}

Efficiency efficiency(std::int64_t ops, double t_seconds, double power_mw) {
  if (!(power_mw > 0.0)) throw InvalidArgument("power must be > 0 mW");
  if (!(t_seconds > 0.0)) throw InvalidArgument("inference time must be > 0");
  Efficiency e;
  e.gops = static_cast<double>(ops) / t_seconds / 1e9;
  e.energy_per_inference_uj = power_mw * 1e-3 * t_seconds * 1e6;
  e.gop_per_joule = e.gops / (power_mw * 1e-3);
  return e;
}

ResourceEstimate resources(const model::ModelConfig& config, fxp::Format format, int lut_depth, int alu5_dsp_count) {
  config.validate();
  if (!format.valid()) throw InvalidArgument("invalid format " + format.to_string());
  if (lut_depth < 1) throw InvalidArgument("LUT depth must be >= 1");
  if (alu5_dsp_count < 1) throw InvalidArgument("ALU5 needs at least one DSP");
  const std::int64_t ni = config.input_size;
  const std::int64_t nh = config.hidden_size;
  const std::int64_t nseq = config.seq_len;
  const std::int64_t no = config.out_features;
  ResourceEstimate r;
  r.dsp_slices = 4 + alu5_dsp_count + 1;
  r.param_words = 4 * nh * (ni + nh) + 4 * nh + no * nh + no;
  r.lut_words = 2 * static_cast<std::int64_t>(lut_depth);
  r.state_words = 2 * nh + ni * nseq;
  return r;
}

PerfReport make_report(const model::ModelConfig& config, const ClockConfig& clock, double power_mw,
                       std::optional<double> measured_us, fxp::Format format, int lut_depth, int alu5_dsp_count) {
  PerfReport r;
  r.config = config;
  r.counts = cycles(config);
  r.clock_hz = clock.freq_hz;
  r.power_mw = power_mw;
  r.format = format;
  r.lut_depth = lut_depth;
  r.estimated = latency_throughput(r.counts.n_total, clock);
  r.ops = op_count(config);
  r.estimated_efficiency = efficiency(r.ops.ops, r.estimated.t_model_s, power_mw);
  if (measured_us) {
    r.measured = measured_timing(*measured_us * 1e-6);
    r.measured_efficiency = efficiency(r.ops.ops, r.measured->t_model_s, power_mw);
  }
  r.resources = resources(config, format, lut_depth, alu5_dsp_count);
  return r;
}

namespace {

nlohmann::json timing_json(const Timing& t, const Efficiency& e) {
  return {
      {"t_model_us", t.t_model_s * 1e6},
      {"inferences_per_second", t.inferences_per_second},
      {"inferences_per_second_floor", std::floor(t.inferences_per_second)},
      {"gops", e.gops},
      {"energy_per_inference_uj", e.energy_per_inference_uj},
      {"gop_per_joule", e.gop_per_joule},
  };
}

}  // namespace

std::string report_to_json(const PerfReport& r) {
  nlohmann::json j;
  j["model"] = {{"input_size", r.config.input_size},
                {"hidden_size", r.config.hidden_size},
                {"seq_len", r.config.seq_len},
                {"out_features", r.config.out_features}};
  j["cycles"] = {{"n_ll", r.counts.n_ll}, {"n_dense", r.counts.n_dense}, {"n_total", r.counts.n_total}};
  j["clock_mhz"] = r.clock_hz / 1e6;
  j["power_mw"] = r.power_mw;
  j["ops"] = {{"macs", r.ops.macs}, {"multiplies", r.ops.multiplies}, {"ops_per_inference", r.ops.ops}};
  j["estimated"] = timing_json(r.estimated, r.estimated_efficiency);
  j["measured"] = r.measured ? timing_json(*r.measured, *r.measured_efficiency) : nlohmann::json(nullptr);
  j["resources"] = {{"dsp_slices", r.resources.dsp_slices},
                    {"param_words", r.resources.param_words},
                    {"lut_words", r.resources.lut_words},
                    {"state_words", r.resources.state_words}};
  j["fixed_point"] = {{"frac_bits", r.format.frac_bits}, {"total_bits", r.format.total_bits}};
  j["lut_depth"] = r.lut_depth;
  return j.dump(2) + "\n";
}

void print_report_table(std::ostream& out, const PerfReport& r) {
  char buf[160];
  auto row = [&](const char* name, const std::string& est, const std::string& meas) {
    std::snprintf(buf, sizeof buf, "| %-26s | %14s | %14s |\n", name, est.c_str(), meas.c_str());
    out << buf;
  };
  auto num = [](const char* fmt, double v) {
    char b[64];
    std::snprintf(b, sizeof b, fmt, v);
    return std::string(b);
  };
  const std::string na = "-";
  out << "| " << std::string(26, ' ') << " | " << "    estimated " << " | " << "     measured " << " |\n";
  row("Cycles (n_total)", std::to_string(r.counts.n_total), na);
  row("Clock (MHz)", num("%.0f", r.clock_hz / 1e6), num("%.0f", r.clock_hz / 1e6));
  row("Power (mW)", num("%.0f", r.power_mw), num("%.0f", r.power_mw));
  row("Latency (us)", num("%.2f", r.estimated.t_model_s * 1e6),
      r.measured ? num("%.2f", r.measured->t_model_s * 1e6) : na);
  row("Inferences/s", num("%.0f", std::floor(r.estimated.inferences_per_second)),
      r.measured ? num("%.0f", std::floor(r.measured->inferences_per_second)) : na);
  row("Throughput (GOP/s)", num("%.3f", r.estimated_efficiency.gops),
      r.measured_efficiency ? num("%.3f", r.measured_efficiency->gops) : na);
  row("Energy/inference (uJ)", num("%.2f", r.estimated_efficiency.energy_per_inference_uj),
      r.measured_efficiency ? num("%.2f", r.measured_efficiency->energy_per_inference_uj) : na);
  row("Energy efficiency (GOP/J)", num("%.2f", r.estimated_efficiency.gop_per_joule),
      r.measured_efficiency ? num("%.2f", r.measured_efficiency->gop_per_joule) : na);
  row("DSP slices", std::to_string(r.resources.dsp_slices), na);
  row("Parameter words", std::to_string(r.resources.param_words), na);
}

}  // namespace qlstm::perf

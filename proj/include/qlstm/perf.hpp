#pragma once

// Analytic timing model, operation counting, throughput/energy metrics and
// DSP/memory-word accounting for the parallel LSTM datapath.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "qlstm/fxp.hpp"
#include "qlstm/lstm.hpp"

namespace qlstm::perf {

struct ClockConfig {
  double freq_hz = 100e6;

  static ClockConfig from_mhz(double mhz);  // throws InvalidArgument unless > 0
  [[nodiscard]] double t_clock() const noexcept { return 1.0 / freq_hz; }
};

struct CycleCounts {
  std::int64_t n_ll = 0;     // LSTM layer
  std::int64_t n_dense = 0;  // dense layer
  std::int64_t n_total = 0;
};

/// n_ll = n_seq (n_i + n_h) 2 (n_h + 1); n_dense = n_h n_o 2 (the dense layer
/// consumes only the last hidden state, so its fan-in is n_h).
CycleCounts cycles(const model::ModelConfig& config);

struct Timing {
  double t_model_s = 0.0;
  double inferences_per_second = 0.0;
};

/// t = n_total / f, throughput = 1 / t.
Timing latency_throughput(std::int64_t n_total, const ClockConfig& clock);

/// Throughput for an externally measured inference time.
Timing measured_timing(double t_seconds);

struct OpCount {
  std::int64_t macs = 0;        // gate matvecs + the two C_t products + dense
  std::int64_t multiplies = 0;  // the bare h_t = o * tanh(C_t) products
  std::int64_t ops = 0;         // 2 per MAC + 1 per bare multiply
};

OpCount op_count(const model::ModelConfig& config);

struct Efficiency {
  double gops = 0.0;
  double energy_per_inference_uj = 0.0;
  double gop_per_joule = 0.0;
};

/// gops = ops / t / 1e9, energy = P t, GOP/J = gops / P[W]. Throws unless
/// power_mw > 0 and t_seconds > 0.
Efficiency efficiency(std::int64_t ops, double t_seconds, double power_mw);

struct ResourceEstimate {
  int dsp_slices = 0;
  std::int64_t param_words = 0;
  std::int64_t lut_words = 0;
  std::int64_t state_words = 0;
};

/// 4 gate ALUs + ALU5 DSPs + 1 dense DSP; parameter, LUT and state word counts.
ResourceEstimate resources(const model::ModelConfig& config, fxp::Format format, int lut_depth,
                           int alu5_dsp_count = 3);

/// Power defaults per device (static + dynamic, mW).
struct PowerProfile {
  const char* device;
  double static_mw;
  double dynamic_mw;
  [[nodiscard]] double total_mw() const noexcept { return static_mw + dynamic_mw; }
};

inline constexpr PowerProfile kXC7S6{"XC7S6", 32.0, 38.0};
inline constexpr PowerProfile kXC7S15{"XC7S15", 32.0, 38.0};
inline constexpr PowerProfile kXC7S25{"XC7S25", 87.0, 43.0};
inline constexpr double kDefaultPowerMw = 71.0;  // board-level figure used for the comparison table

// Reference hardware measurement for the default configuration at 100 MHz.
inline constexpr double kMeasuredInferenceUs = 57.25;
inline constexpr double kEstimatedInferenceUs = 53.32;
inline constexpr double kMeasuredOverheadUs = 3.93;

struct PerfReport {
  model::ModelConfig config;
  CycleCounts counts;
  double clock_hz = 0.0;
  double power_mw = 0.0;
  Timing estimated;
  std::optional<Timing> measured;
  OpCount ops;
  Efficiency estimated_efficiency;
  std::optional<Efficiency> measured_efficiency;
  ResourceEstimate resources;
  fxp::Format format;
  int lut_depth = 256;
};

PerfReport make_report(const model::ModelConfig& config, const ClockConfig& clock, double power_mw,
                       std::optional<double> measured_us, fxp::Format format, int lut_depth, int alu5_dsp_count);

/// Stable-key JSON document.
std::string report_to_json(const PerfReport& report);

/// Comparison-table layout: platform, clock, power, throughput, energy efficiency.
void print_report_table(std::ostream& out, const PerfReport& report);

}  // namespace qlstm::perf

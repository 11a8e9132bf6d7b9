#pragma once

// Cycle-accurate model of the LSTM datapath. Four gate ALUs compute one row
// of each gate matvec concurrently, shared sigmoid/tanh ROM units translate
// the finished row, and ALU5 updates C_t[n] and h_t[n] while the ALUs move on
// to row n + 1. The sequential baseline runs all four rows on one ALU and
// waits for each h_t[n] before starting the next row.
//
// Timing rules:
//   * a gate row is a chain of MAC slots, alu_latency cycles each: the bias
//     load, then the columns [h | x]. A slot that reads h_{t-1}[j] stalls
//     until that word has been written.
//   * every unit serves its queue in program order; the sigmoid ROM thus
//     serves f, i, o of a row in that order.
//   * ALU5 computes C_t[n] on two DSPs in one ALU slot (f*C and i*g summed in
//     the DSP cascade), then h_t[n] on one DSP.
//   * the dense layer waits for the whole last recursion and spends
//     (n_h + 1) ALU slots per output on its own DSP.
// An operation issued at cycle s with latency k occupies [s, s + k) and its
// result is visible from cycle s + k.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qlstm/fxp.hpp"
#include "qlstm/lstm.hpp"
#include "qlstm/quantizer.hpp"

namespace qlstm::sim {

enum class Schedule { Parallel, Sequential };

std::string_view to_string(Schedule schedule) noexcept;
Schedule parse_schedule(std::string_view name);  // "parallel" | "sequential"

struct DatapathConfig {
  model::ModelConfig model;
  int alu_latency_cycles = 2;
  int lut_latency_cycles = 1;
  int gate_alu_count = 4;  // 4 in parallel mode, 1 in sequential mode
  int alu5_dsp_count = 3;
  Schedule schedule = Schedule::Parallel;

  static DatapathConfig for_schedule(const model::ModelConfig& model, Schedule schedule);

  /// Throws InvalidArgument.
  void validate() const;
};

enum class Phase { GateMatvec = 0, Activation = 1, Elementwise = 2, Dense = 3 };
inline constexpr std::array<Phase, 4> kPhases{Phase::GateMatvec, Phase::Activation, Phase::Elementwise,
                                              Phase::Dense};

/// "gate-matvec", "activation", "elementwise", "dense".
std::string_view to_string(Phase phase) noexcept;

enum class OpKind { GateRow, Lookup, CellUpdate, HiddenUpdate, DenseRow };

std::string_view to_string(OpKind kind) noexcept;

/// Lookup lane for tanh(C_t[n]); lanes 0..3 are the gates.
inline constexpr int kCellLane = 4;

struct OpRecord {
  OpKind kind = OpKind::GateRow;
  int step = 0;   // recursion index, -1 for dense rows
  int row = 0;    // hidden row n, or output index for dense rows
  int lane = -1;  // gate index (or kCellLane); -1 for all four gates / not applicable
  std::vector<int> units;
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive
};

struct CycleTrace {
  Schedule schedule = Schedule::Parallel;
  model::ModelConfig model;
  std::vector<std::string> unit_names;
  std::vector<std::int64_t> per_recursion;      // between consecutive h_t completions
  std::map<std::string, std::int64_t> unit_busy;  // cycles spent computing
  std::array<std::int64_t, 4> phase_cycles{};   // indexed by Phase
  std::int64_t dense_cycles = 0;
  std::int64_t total_cycles = 0;
  std::vector<OpRecord> ops;

  [[nodiscard]] std::int64_t phase(Phase p) const noexcept { return phase_cycles[static_cast<std::size_t>(p)]; }
};

struct SimResult {
  std::vector<fxp::Word> outputs;
  CycleTrace trace;
};

/// A datapath instance owns its own copies of the parameter and LUT ROMs.
class Datapath {
 public:
  /// Throws InvalidArgument when the model and the datapath config disagree.
  Datapath(const quant::QuantizedModel& qm, DatapathConfig config);

  /// Overwrites one ROM word, for fault-injection tests.
  void corrupt_lut(quant::ActivationKind kind, std::size_t index, std::int32_t raw);

  [[nodiscard]] SimResult run(const quant::QSequence& inputs) const;

  [[nodiscard]] const DatapathConfig& config() const noexcept { return config_; }

 private:
  quant::QuantizedModel rom_;
  DatapathConfig config_;
};

SimResult simulate(const quant::QuantizedModel& qm, const quant::QSequence& inputs, const DatapathConfig& dpc);

/// Fraction of total cycles per phase. Throws InvalidArgument on an empty trace.
std::map<Phase, double> phase_breakdown(const CycleTrace& trace);

/// Unit exclusivity and data dependencies of the recorded schedule.
/// Throws InvariantViolation describing the first violation.
void check_schedule(const CycleTrace& trace);

struct LutFault {
  quant::ActivationKind kind = quant::ActivationKind::Sigmoid;
  std::size_t index = 0;
  std::int32_t raw = 0;
};

inline constexpr double kCycleTolerance = 0.05;

struct CrossCheckReport {
  std::size_t outputs_compared = 0;
  std::optional<std::size_t> first_mismatch;
  std::int32_t expected_raw = 0;  // q_forward at first_mismatch
  std::int32_t actual_raw = 0;    // datapath at first_mismatch
  std::int64_t simulated_cycles = 0;
  std::int64_t analytic_cycles = 0;
  double cycle_deviation = 0.0;
  bool cycles_checked = false;  // parallel schedule only

  [[nodiscard]] bool outputs_match() const noexcept { return !first_mismatch.has_value(); }
  [[nodiscard]] bool cycles_ok() const noexcept { return !cycles_checked || cycle_deviation <= kCycleTolerance; }
  [[nodiscard]] bool ok() const noexcept { return outputs_match() && cycles_ok(); }
  [[nodiscard]] std::string describe() const;
};

/// Runs the datapath and q_forward on the same inputs and compares them.
CrossCheckReport cross_check(const quant::QuantizedModel& qm, const quant::QSequence& inputs,
                             const DatapathConfig& dpc, const std::optional<LutFault>& fault = std::nullopt);

/// Stable-key JSON; the per-operation log is included on request.
std::string trace_to_json(const CycleTrace& trace, bool include_ops = false);

void print_trace_table(std::ostream& out, const CycleTrace& trace);

}  // namespace qlstm::sim

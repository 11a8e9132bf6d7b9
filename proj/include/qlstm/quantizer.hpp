#pragma once

// Post-training quantization to Q(x, y), lookup-table activations and the
// bit-exact functional model of fixed-point inference.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qlstm/fxp.hpp"
#include "qlstm/lstm.hpp"
#include "qlstm/training.hpp"

namespace qlstm::quant {

enum class ActivationKind { Sigmoid, Tanh };

std::string_view to_string(ActivationKind kind) noexcept;
double activate(ActivationKind kind, double v) noexcept;

inline constexpr double kLutInputLo = -8.0;
inline constexpr double kLutInputHi = 8.0;
inline constexpr int kDefaultLutDepth = 256;

/// Depth-D table sampled at the left edge of each of D equal input bins.
struct ActivationLut {
  ActivationKind kind = ActivationKind::Sigmoid;
  int depth = 0;
  double input_lo = kLutInputLo;
  double input_hi = kLutInputHi;
  fxp::Format format;
  std::vector<std::int32_t> entries;

  [[nodiscard]] double step() const noexcept { return (input_hi - input_lo) / depth; }
  [[nodiscard]] fxp::Word entry(std::size_t i) const { return fxp::Word{entries.at(i), format}; }

  friend bool operator==(const ActivationLut&, const ActivationLut&) = default;
};

/// True for the supported depths 64, 128, 256, 512.
bool is_supported_depth(int depth) noexcept;

/// entries[i] = quantize(f(lo + i * (hi - lo) / depth)). Throws InvalidArgument
/// on an unsupported depth or an empty range.
ActivationLut build_lut(ActivationKind kind, int depth, fxp::Format format, double input_lo = kLutInputLo,
                        double input_hi = kLutInputHi);

/// clamp(floor((value(v) - lo) / step), 0, depth - 1): the ROM address obtained by
/// dropping the low fractional bits of the input.
std::size_t lut_index(const ActivationLut& lut, fxp::Word v);

fxp::Word lut_lookup(const ActivationLut& lut, fxp::Word v);

struct QuantizedModel {
  model::ModelConfig config;
  fxp::Format format;
  std::array<fxp::Tensor, 4> W;  // indexed by model::Gate, columns [h | x]
  std::array<fxp::Tensor, 4> b;
  fxp::Tensor dense_W;
  fxp::Tensor dense_b;
  ActivationLut sigmoid_lut;
  ActivationLut tanh_lut;

  const fxp::Tensor& gate_W(model::Gate g) const { return W[static_cast<std::size_t>(g)]; }
  const fxp::Tensor& gate_b(model::Gate g) const { return b[static_cast<std::size_t>(g)]; }

  /// Throws InvalidArgument on shape/format inconsistencies.
  void validate() const;

  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

struct TensorQuantization {
  std::string name;
  double max_abs_error = 0.0;
  std::size_t saturated = 0;
};

struct QuantizeResult {
  QuantizedModel model;
  std::vector<TensorQuantization> tensors;  // one entry per parameter tensor
  std::vector<std::string> warnings;        // saturated tensors

  [[nodiscard]] double max_abs_error() const noexcept;
};

QuantizeResult quantize_model(const model::LstmParams& params, const model::ModelConfig& config,
                              fxp::Format format, int lut_depth = kDefaultLutDepth);

/// seq_len steps of input_size words each.
using QSequence = std::vector<std::vector<fxp::Word>>;

QSequence quantize_sequence(const model::Sequence& inputs, fxp::Format format);

enum class ActivationMode {
  Lut,    // table lookups, as in hardware
  Exact,  // true sigmoid/tanh of the dequantized pre-activation, re-quantized
};

/// Fixed-point inference. Gate and dense pre-activations accumulate exactly
/// and round once; C_t accumulates f*C + i*g exactly and rounds once; h_t
/// rounds its single product.
std::vector<fxp::Word> q_forward(const QuantizedModel& qm, const QSequence& inputs,
                                 ActivationMode mode = ActivationMode::Lut);

struct SweepRow {
  int key = 0;  // fractional bits or LUT depth
  double mse = 0.0;
};

/// Test MSE for frac bits in [x_lo, x_hi] with Q(x, x + int_bits) and exact
/// activations, isolating the effect of the fractional width.
std::vector<SweepRow> sweep_frac_bits(const model::LstmParams& params, const model::ModelConfig& config,
                                      const train::WindowedDataset& data, int x_lo, int x_hi, int int_bits = 8);

/// Test MSE with full fixed-point inference, both LUTs at each depth.
std::vector<SweepRow> sweep_lut_depth(const QuantizedModel& base, std::span<const int> depths,
                                      const train::WindowedDataset& data);

/// MSE of q_forward (first output, dequantized) against the dataset targets.
double quantized_mse(const QuantizedModel& qm, const train::WindowedDataset& data,
                     ActivationMode mode = ActivationMode::Lut);

/// "x,mse" / "depth,mse" CSV, LF-terminated, 6 significant digits.
void write_sweep_csv(std::ostream& out, std::string_view key_name, std::span<const SweepRow> rows);

}  // namespace qlstm::quant

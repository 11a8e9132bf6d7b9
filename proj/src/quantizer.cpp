#include "qlstm/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "qlstm/error.hpp"

namespace qlstm::quant {

using fxp::Format;
using fxp::Tensor;
using fxp::WideAcc;
using fxp::Word;
using model::Gate;
using model::kGates;

namespace {

Tensor quantize_tensor(const std::vector<double>& values, std::size_t rows, std::size_t cols, Format format,
                       const std::string& name, QuantizeResult& result) {
  Tensor t(format, rows, cols);
  TensorQuantization stats{name, 0.0, 0};
  for (std::size_t k = 0; k < values.size(); ++k) {
    const Word w = fxp::quantize(values[k], format);
    t.raw[k] = w.raw;
    const double err = std::abs(w.value() - values[k]);
    stats.max_abs_error = std::max(stats.max_abs_error, err);
    if (err > 0.5 * format.lsb()) ++stats.saturated;
  }
  if (stats.saturated > 0) {
    result.warnings.push_back(name + ": " + std::to_string(stats.saturated) + " value(s) saturated to " +
                              format.to_string() + " range");
  }
  result.tensors.push_back(stats);
  return t;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("quantized model: " + what);
}

Word activation(const QuantizedModel& qm, ActivationKind kind, Word pre, ActivationMode mode) {
  if (mode == ActivationMode::Exact) return fxp::quantize(activate(kind, pre.value()), qm.format);
  return lut_lookup(kind == ActivationKind::Sigmoid ? qm.sigmoid_lut : qm.tanh_lut, pre);
}

}  // namespace

std::string_view to_string(ActivationKind kind) noexcept {
  return kind == ActivationKind::Sigmoid ? "sigmoid" : "tanh";
}

double activate(ActivationKind kind, double v) noexcept {
  return kind == ActivationKind::Sigmoid ? model::sigmoid(v) : std::tanh(v);
}

bool is_supported_depth(int depth) noexcept {
  return depth == 64 || depth == 128 || depth == 256 || depth == 512;
}

ActivationLut build_lut(ActivationKind kind, int depth, Format format, double input_lo, double input_hi) {
  if (!is_supported_depth(depth)) {
    throw InvalidArgument("unsupported LUT depth " + std::to_string(depth) + " (expected 64, 128, 256 or 512)");
  }
  if (!(input_lo < input_hi) || !std::isfinite(input_lo) || !std::isfinite(input_hi)) {
    throw InvalidArgument("LUT input range must satisfy lo < hi");
  }
  if (!format.valid()) throw InvalidArgument("invalid LUT format " + format.to_string());
  ActivationLut lut{kind, depth, input_lo, input_hi, format, {}};
  lut.entries.reserve(static_cast<std::size_t>(depth));
  const double step = lut.step();
  for (int i = 0; i < depth; ++i) {
    lut.entries.push_back(fxp::quantize(activate(kind, input_lo + i * step), format).raw);
  }
  return lut;
}

std::size_t lut_index(const ActivationLut& lut, Word v) {
  if (v.format != lut.format) {
    throw InvalidArgument("LUT format " + lut.format.to_string() + " does not match input " + v.format.to_string());
  }
  // Exact for dyadic ranges such as [-8, 8): every operand is a short binary fraction.
  const double pos = std::floor((v.value() - lut.input_lo) / lut.step());
  if (pos <= 0.0) return 0;
  const auto last = static_cast<double>(lut.depth - 1);
  return static_cast<std::size_t>(std::min(pos, last));
}

Word lut_lookup(const ActivationLut& lut, Word v) { return lut.entry(lut_index(lut, v)); }

void QuantizedModel::validate() const {
  config.validate();
  check(format.valid(), "invalid format");
  const auto nh = static_cast<std::size_t>(config.hidden_size);
  const auto no = static_cast<std::size_t>(config.out_features);
  for (Gate g : kGates) {
    const Tensor& w = gate_W(g);
    const Tensor& bias = gate_b(g);
    const std::string s(model::gate_suffix(g));
    check(w.rows == nh && w.cols == config.concat_size() && w.raw.size() == nh * w.cols, "W_" + s + " shape");
    check(bias.rows == nh && bias.cols == 1 && bias.raw.size() == nh, "b_" + s + " shape");
    check(w.format == format && bias.format == format, "W_" + s + "/b_" + s + " format");
  }
  check(dense_W.rows == no && dense_W.cols == nh && dense_W.raw.size() == no * nh, "dense_W shape");
  check(dense_b.rows == no && dense_b.cols == 1 && dense_b.raw.size() == no, "dense_b shape");
  check(dense_W.format == format && dense_b.format == format, "dense format");
  for (const ActivationLut* lut : {&sigmoid_lut, &tanh_lut}) {
    check(lut->format == format, std::string(to_string(lut->kind)) + " LUT format");
    check(is_supported_depth(lut->depth) && lut->entries.size() == static_cast<std::size_t>(lut->depth),
          std::string(to_string(lut->kind)) + " LUT depth");
  }
  check(sigmoid_lut.kind == ActivationKind::Sigmoid && tanh_lut.kind == ActivationKind::Tanh, "LUT kinds");
}

double QuantizeResult::max_abs_error() const noexcept {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_abs_error);
  return m;
}

QuantizeResult quantize_model(const model::LstmParams& params, const model::ModelConfig& config, Format format,
                              int lut_depth) {
  params.validate(config);
  if (!format.valid()) throw InvalidArgument("invalid fixed-point format " + format.to_string());
  QuantizeResult result;
  QuantizedModel& qm = result.model;
  qm.config = config;
  qm.format = format;
  for (Gate g : kGates) {
    const auto gi = static_cast<std::size_t>(g);
    const std::string s(model::gate_suffix(g));
    const auto& w = params.gate_W(g);
    qm.W[gi] = quantize_tensor(w.data, w.rows, w.cols, format, "W_" + s, result);
    qm.b[gi] = quantize_tensor(params.gate_b(g), params.gate_b(g).size(), 1, format, "b_" + s, result);
  }
  qm.dense_W = quantize_tensor(params.dense_W.data, params.dense_W.rows, params.dense_W.cols, format, "dense_W", result);
  qm.dense_b = quantize_tensor(params.dense_b, params.dense_b.size(), 1, format, "dense_b", result);
  qm.sigmoid_lut = build_lut(ActivationKind::Sigmoid, lut_depth, format);
  qm.tanh_lut = build_lut(ActivationKind::Tanh, lut_depth, format);
  return result;
}

QSequence quantize_sequence(const model::Sequence& inputs, Format format) {
  QSequence out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    std::vector<Word> q;
    q.reserve(x.size());
    for (double v : x) q.push_back(fxp::quantize(v, format));
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Word> q_forward(const QuantizedModel& qm, const QSequence& inputs, ActivationMode mode) {
  qm.validate();
  const auto nh = static_cast<std::size_t>(qm.config.hidden_size);
  const auto ni = static_cast<std::size_t>(qm.config.input_size);
  const Format fmt = qm.format;
  if (inputs.size() != static_cast<std::size_t>(qm.config.seq_len)) {
    throw InvalidArgument("shape mismatch: inputs length vs seq_len");
  }

  std::vector<Word> h(nh, Word{0, fmt});
  std::vector<Word> c(nh, Word{0, fmt});
  std::vector<Word> z(nh + ni, Word{0, fmt});
  std::vector<Word> h_next(nh), c_next(nh);
  for (const auto& x : inputs) {
    if (x.size() != ni) throw InvalidArgument("shape mismatch: x_t length vs input_size");
    std::copy(h.begin(), h.end(), z.begin());
    for (std::size_t k = 0; k < ni; ++k) {
      if (x[k].format != fmt) throw InvalidArgument("input format does not match model format");
      z[nh + k] = x[k];
    }
    for (std::size_t n = 0; n < nh; ++n) {
      std::array<Word, 4> pre;
      for (Gate g : kGates) {
        const Tensor& w = qm.gate_W(g);
        WideAcc acc = fxp::lift(qm.gate_b(g).at(n));
        for (std::size_t j = 0; j < z.size(); ++j) acc = fxp::mac(acc, w.at(n, j), z[j]);
        pre[static_cast<std::size_t>(g)] = fxp::finalize(acc, fmt);
      }
      const Word f = activation(qm, ActivationKind::Sigmoid, pre[0], mode);
      const Word i = activation(qm, ActivationKind::Sigmoid, pre[1], mode);
      const Word g = activation(qm, ActivationKind::Tanh, pre[2], mode);
      const Word o = activation(qm, ActivationKind::Sigmoid, pre[3], mode);
      c_next[n] = fxp::finalize(fxp::mac(fxp::mac(0, f, c[n]), i, g), fmt);
      h_next[n] = fxp::mul(o, activation(qm, ActivationKind::Tanh, c_next[n], mode));
    }
    h.swap(h_next);
    c.swap(c_next);
  }

  std::vector<Word> y;
  y.reserve(qm.dense_b.size());
  for (std::size_t o = 0; o < qm.dense_b.size(); ++o) {
    WideAcc acc = fxp::lift(qm.dense_b.at(o));
    for (std::size_t j = 0; j < nh; ++j) acc = fxp::mac(acc, qm.dense_W.at(o, j), h[j]);
    y.push_back(fxp::finalize(acc, fmt));
  }
  return y;
}

double quantized_mse(const QuantizedModel& qm, const train::WindowedDataset& data, ActivationMode mode) {
  if (data.samples.empty()) throw InvalidArgument("evaluation set is empty");
  double sum = 0.0;
  for (const auto& s : data.samples) {
    const auto y = q_forward(qm, quantize_sequence(model::scalar_sequence(s.window), qm.format), mode);
    const double e = y.front().value() - s.target;
    sum += e * e;
  }
  return sum / static_cast<double>(data.samples.size());
}

std::vector<SweepRow> sweep_frac_bits(const model::LstmParams& params, const model::ModelConfig& config,
                                      const train::WindowedDataset& data, int x_lo, int x_hi, int int_bits) {
  if (x_lo < 2 || x_hi > 16 || x_lo > x_hi) throw InvalidArgument("fractional-bit range must lie within [2, 16]");
  if (int_bits < 1) throw InvalidArgument("integer bits must be >= 1");
  std::vector<SweepRow> rows;
  for (int x = x_lo; x <= x_hi; ++x) {
    const Format fmt = Format::make(x, x + int_bits);
    const QuantizedModel qm = quantize_model(params, config, fmt).model;
    rows.push_back({x, quantized_mse(qm, data, ActivationMode::Exact)});
  }
  return rows;
}

std::vector<SweepRow> sweep_lut_depth(const QuantizedModel& base, std::span<const int> depths,
                                      const train::WindowedDataset& data) {
  std::vector<SweepRow> rows;
  for (int depth : depths) {
    QuantizedModel qm = base;
    qm.sigmoid_lut = build_lut(ActivationKind::Sigmoid, depth, base.format, base.sigmoid_lut.input_lo,
                               base.sigmoid_lut.input_hi);
    qm.tanh_lut = build_lut(ActivationKind::Tanh, depth, base.format, base.tanh_lut.input_lo, base.tanh_lut.input_hi);
    rows.push_back({depth, quantized_mse(qm, data, ActivationMode::Lut)});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::string_view key_name, std::span<const SweepRow> rows) {
  out << key_name << ",mse\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6g\n", r.key, r.mse);
    out << buf;
  }
}

}  // namespace qlstm::quant

#pragma once

// Seeded models and inputs shared by the test binaries.

#include <cstdint>
#include <random>

#include "qlstm/lstm.hpp"
#include "qlstm/quantizer.hpp"

namespace fixtures {

inline qlstm::model::Sequence random_inputs(const qlstm::model::ModelConfig& cfg, std::uint64_t seed,
                                            double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  qlstm::model::Sequence xs(static_cast<std::size_t>(cfg.seq_len),
                            std::vector<double>(static_cast<std::size_t>(cfg.input_size)));
  for (auto& x : xs) {
    for (double& v : x) v = u(rng);
  }
  return xs;
}

/// Random float parameters scaled up so that the quantized model exercises
/// saturation, both LUT edges and non-trivial rounding.
inline qlstm::quant::QuantizedModel random_qmodel(const qlstm::model::ModelConfig& cfg, std::uint64_t seed,
                                                  qlstm::fxp::Format format = qlstm::fxp::Format::make(8, 16),
                                                  double weight_scale = 3.0, int lut_depth = 256) {
  qlstm::model::LstmParams p = qlstm::model::LstmParams::random(cfg, seed);
  for (auto& w : p.W) {
    for (double& v : w.data) v *= weight_scale;
  }
  for (auto& b : p.b) {
    for (double& v : b) v *= weight_scale;
  }
  return qlstm::quant::quantize_model(p, cfg, format, lut_depth).model;
}

inline qlstm::quant::QSequence random_qinputs(const qlstm::model::ModelConfig& cfg, std::uint64_t seed,
                                              qlstm::fxp::Format format = qlstm::fxp::Format::make(8, 16)) {
  return qlstm::quant::quantize_sequence(random_inputs(cfg, seed, 2.0), format);
}

}  // namespace fixtures

#include "qlstm/lstm.hpp"

#include <cmath>
#include <random>
#include <string>

#include "qlstm/error.hpp"

namespace qlstm::model {

namespace {

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("shape mismatch: " + what);
}

void check_finite(const std::vector<double>& values, const std::string& name) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite entry in " + name);
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 1 || hidden_size < 1 || seq_len < 1 || out_features < 1) {
    throw InvalidArgument("model sizes must all be >= 1");
  }
}

std::string_view gate_suffix(Gate gate) noexcept {
  switch (gate) {
    case Gate::Forget: return "f";
    case Gate::Input: return "i";
    case Gate::Candidate: return "g";
    case Gate::Output: return "o";
  }
  return "?";
}

LstmParams LstmParams::zeros(const ModelConfig& config) {
  config.validate();
  const auto nh = static_cast<std::size_t>(config.hidden_size);
  const auto no = static_cast<std::size_t>(config.out_features);
  LstmParams p;
  for (Gate g : kGates) {
    p.gate_W(g) = Matrix(nh, config.concat_size());
    p.gate_b(g).assign(nh, 0.0);
  }
  p.dense_W = Matrix(no, nh);
  p.dense_b.assign(no, 0.0);
  return p;
}

LstmParams LstmParams::random(const ModelConfig& config, std::uint64_t seed) {
  LstmParams p = zeros(config);
  std::mt19937_64 rng(seed);
  const double k_cell = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  std::uniform_real_distribution<double> cell(-k_cell, k_cell);
  for (Gate g : kGates) {
    for (double& w : p.gate_W(g).data) w = cell(rng);
    for (double& v : p.gate_b(g)) v = cell(rng);
  }
  // Dense fan-in is hidden_size as well.
  for (double& w : p.dense_W.data) w = cell(rng);
  for (double& v : p.dense_b) v = cell(rng);
  return p;
}

void LstmParams::validate(const ModelConfig& config) const {
  config.validate();
  const auto nh = static_cast<std::size_t>(config.hidden_size);
  const auto no = static_cast<std::size_t>(config.out_features);
  for (Gate g : kGates) {
    const std::string s(gate_suffix(g));
    const Matrix& w = gate_W(g);
    check_shape(w.rows == nh && w.cols == config.concat_size() && w.data.size() == nh * w.cols, "W_" + s);
    check_shape(gate_b(g).size() == nh, "b_" + s);
  }
  check_shape(dense_W.rows == no && dense_W.cols == nh && dense_W.data.size() == no * nh, "dense_W");
  check_shape(dense_b.size() == no, "dense_b");
  for_each_tensor([](const std::string& name, const std::vector<double>& v) { check_finite(v, name); });
}

CellState CellState::zeros(int hidden_size) {
  const auto nh = static_cast<std::size_t>(hidden_size);
  return CellState{std::vector<double>(nh, 0.0), std::vector<double>(nh, 0.0)};
}

double sigmoid(double v) noexcept { return 1.0 / (1.0 + std::exp(-v)); }

CellState cell_step(const LstmParams& params, const CellState& state, std::span<const double> x) {
  const std::size_t nh = state.h.size();
  const Matrix& wf = params.gate_W(Gate::Forget);
  check_shape(state.c.size() == nh && wf.rows == nh, "cell state vs hidden_size");
  check_shape(wf.cols == nh + x.size(), "x_t length vs input_size");

  CellState next{std::vector<double>(nh), std::vector<double>(nh)};
  for (std::size_t n = 0; n < nh; ++n) {
    std::array<double, 4> pre{};
    for (Gate g : kGates) {
      const auto gi = static_cast<std::size_t>(g);
      const Matrix& w = params.W[gi];
      double acc = params.b[gi][n];
      for (std::size_t j = 0; j < nh; ++j) acc += w(n, j) * state.h[j];
      for (std::size_t k = 0; k < x.size(); ++k) acc += w(n, nh + k) * x[k];
      pre[gi] = acc;
    }
    const double f = sigmoid(pre[0]);
    const double i = sigmoid(pre[1]);
    const double g = std::tanh(pre[2]);
    const double o = sigmoid(pre[3]);
    next.c[n] = f * state.c[n] + i * g;
    next.h[n] = o * std::tanh(next.c[n]);
  }
  return next;
}

std::vector<double> forward(const LstmParams& params, const ModelConfig& config, const Sequence& inputs) {
  params.validate(config);
  check_shape(inputs.size() == static_cast<std::size_t>(config.seq_len), "inputs length vs seq_len");
  CellState state = CellState::zeros(config.hidden_size);
  for (const auto& x : inputs) {
    check_shape(x.size() == static_cast<std::size_t>(config.input_size), "x_t length vs input_size");
    state = cell_step(params, state, x);
  }
  std::vector<double> out(params.dense_b);
  for (std::size_t o = 0; o < out.size(); ++o) {
    for (std::size_t j = 0; j < state.h.size(); ++j) out[o] += params.dense_W(o, j) * state.h[j];
  }
  return out;
}

Sequence scalar_sequence(std::span<const double> window) {
  Sequence seq;
  seq.reserve(window.size());
  for (double v : window) seq.push_back({v});
  return seq;
}

}  // namespace qlstm::model

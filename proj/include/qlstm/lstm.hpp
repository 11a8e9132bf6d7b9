#pragma once

// Full-precision vanilla LSTM: one cell unrolled over the input sequence,
// followed by a dense layer on the last hidden state.
//
// Gate weight matrices are (hidden_size x (hidden_size + input_size)) with
// the columns ordered [h | x]: hidden part first, then the input part. The
// same order is used by the quantizer, the datapath simulator and the ROM
// files.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qlstm::model {

struct ModelConfig {
  int input_size = 1;    // n_i
  int hidden_size = 20;  // n_h
  int seq_len = 6;       // n_seq
  int out_features = 1;  // n_o

  /// Throws InvalidArgument unless every size is >= 1.
  void validate() const;
  [[nodiscard]] std::size_t concat_size() const noexcept {
    return static_cast<std::size_t>(hidden_size + input_size);
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Gate : std::uint8_t { Forget = 0, Input = 1, Candidate = 2, Output = 3 };
inline constexpr std::array<Gate, 4> kGates{Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output};

/// "f", "i", "g", "o".
std::string_view gate_suffix(Gate gate) noexcept;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct LstmParams {
  std::array<Matrix, 4> W;               // indexed by Gate
  std::array<std::vector<double>, 4> b;  // indexed by Gate
  Matrix dense_W;                        // out_features x hidden_size
  std::vector<double> dense_b;

  static LstmParams zeros(const ModelConfig& config);

  /// Uniform(-1/sqrt(fan), 1/sqrt(fan)) initialisation, deterministic per seed.
  static LstmParams random(const ModelConfig& config, std::uint64_t seed);

  Matrix& gate_W(Gate g) { return W[static_cast<std::size_t>(g)]; }
  const Matrix& gate_W(Gate g) const { return W[static_cast<std::size_t>(g)]; }
  std::vector<double>& gate_b(Gate g) { return b[static_cast<std::size_t>(g)]; }
  const std::vector<double>& gate_b(Gate g) const { return b[static_cast<std::size_t>(g)]; }

  /// Throws InvalidArgument on shape mismatch or non-finite entries.
  void validate(const ModelConfig& config) const;

  /// Visits every tensor as (name, flat values). Names match the ROM roles.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    for (Gate g : kGates) {
      fn(std::string("W_") + std::string(gate_suffix(g)), gate_W(g).data);
      fn(std::string("b_") + std::string(gate_suffix(g)), gate_b(g));
    }
    fn(std::string("dense_W"), dense_W.data);
    fn(std::string("dense_b"), dense_b);
  }

  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

struct CellState {
  std::vector<double> h;
  std::vector<double> c;

  static CellState zeros(int hidden_size);
};

/// One sequence of seq_len input vectors, each of length input_size.
using Sequence = std::vector<std::vector<double>>;

double sigmoid(double v) noexcept;

CellState cell_step(const LstmParams& params, const CellState& state, std::span<const double> x);

/// Unrolls seq_len cell steps from a zero state, then applies the dense layer.
std::vector<double> forward(const LstmParams& params, const ModelConfig& config, const Sequence& inputs);

/// Wraps a scalar window as a Sequence for input_size == 1 models.
Sequence scalar_sequence(std::span<const double> window);

}  // namespace qlstm::model

#pragma once

// Data ingestion, sliding-window datasets and full-precision training
// (BPTT + Adam + step learning-rate schedule).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "qlstm/lstm.hpp"

namespace qlstm::train {

struct TimeSeries {
  std::vector<double> values;
  std::optional<double> period_seconds;
};

/// Min-max scaling to [0, 1]. A degenerate range (max == min) maps to 0.
struct Normalization {
  double min = 0.0;
  double max = 1.0;

  [[nodiscard]] double apply(double v) const noexcept;
  [[nodiscard]] double invert(double v) const noexcept;
  static Normalization identity() noexcept { return {0.0, 1.0}; }
};

/// One input window of seq_len consecutive values and the value that follows.
struct Sample {
  std::vector<double> window;
  double target = 0.0;
};

struct WindowedDataset {
  std::vector<Sample> samples;
  Normalization normalization;
};

/// train : test ratio, e.g. 3:1.
struct SplitRatio {
  int train = 3;
  int test = 1;
};

struct DatasetSplit {
  WindowedDataset train;
  WindowedDataset test;
};

/// One float per line, optional single header line, LF or CRLF.
/// Throws DataError naming the offending row.
TimeSeries ingest_csv(const std::filesystem::path& path);

/// Chronological split of the L - seq_len windows; min-max scaling fitted on
/// the training windows only and applied to both halves.
DatasetSplit make_dataset(const TimeSeries& series, int seq_len, SplitRatio ratio = {}, bool normalize = true);

enum class SynthKind { SineNoise };

/// 50 + 20 sin(2 pi t / 288) + N(0, 2), deterministic per seed. length >= 64.
TimeSeries synth_series(SynthKind kind, std::size_t length, std::uint64_t seed);

/// Plain mean squared error (no 1/2 factor). Throws on empty or unequal input.
double loss_mse(std::span<const double> pred, std::span<const double> target);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> prediction;
  model::LstmParams grad;  // same layout as the parameters
};

/// Exact gradient of the MSE loss of one window w.r.t. every parameter.
LossAndGrad grad_bptt(const model::LstmParams& params, const model::ModelConfig& config,
                      const model::Sequence& window, std::span<const double> target);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 1;
  double lr = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  int sched_step = 3;
  double sched_gamma = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  /// lr * gamma^floor(epoch / step), epochs counted from 0.
  [[nodiscard]] double lr_at(int epoch) const;
};

/// Bias-corrected Adam over an LstmParams-shaped parameter set.
class Adam {
 public:
  Adam(const model::LstmParams& like, double beta1, double beta2, double eps);

  void step(model::LstmParams& params, const model::LstmParams& grad, double lr);
  [[nodiscard]] long steps() const noexcept { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  model::LstmParams m_;
  model::LstmParams v_;
};

struct TrainResult {
  model::LstmParams params;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Batch size 1, fixed sample order. Throws DataError if the loss diverges.
TrainResult train(const model::LstmParams& params0, const model::ModelConfig& config, const TrainConfig& tc,
                  const WindowedDataset& train_set);

/// Test MSE of the float model over a dataset (normalised units).
double evaluate_mse(const model::LstmParams& params, const model::ModelConfig& config, const WindowedDataset& data);

}  // namespace qlstm::train

#include "qlstm/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qlstm/error.hpp"

namespace qlstm::train {

using model::Gate;
using model::kGates;
using model::LstmParams;
using model::Matrix;
using model::ModelConfig;

namespace {

constexpr std::size_t kMinCsvRows = 8;

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Per-step activations kept for the backward pass.
struct StepCache {
  std::vector<double> z;  // [h_{t-1} | x_t]
  std::vector<double> f, i, g, o;
  std::vector<double> c_prev, c, tanh_c;
};

void for_each_buffer(LstmParams& p, const auto& fn) {
  for (auto& w : p.W) fn(w.data);
  for (auto& b : p.b) fn(b);
  fn(p.dense_W.data);
  fn(p.dense_b);
}

void zero(LstmParams& p) {
  for_each_buffer(p, [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
}

// Accumulates d(loss)/d(params) into `grad`, returns the loss.
double backprop_into(const LstmParams& p, const ModelConfig& cfg, const model::Sequence& window,
                     std::span<const double> target, LstmParams& grad, std::vector<double>* prediction) {
  const auto nh = static_cast<std::size_t>(cfg.hidden_size);
  const auto ni = static_cast<std::size_t>(cfg.input_size);
  const auto no = static_cast<std::size_t>(cfg.out_features);
  const std::size_t nz = nh + ni;
  if (window.size() != static_cast<std::size_t>(cfg.seq_len) || target.size() != no) {
    throw InvalidArgument("shape mismatch: window/target vs model config");
  }

  std::vector<StepCache> steps(window.size());
  std::vector<double> h(nh, 0.0), c(nh, 0.0);
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].size() != ni) throw InvalidArgument("shape mismatch: x_t length vs input_size");
    StepCache& s = steps[t];
    s.z.resize(nz);
    std::copy(h.begin(), h.end(), s.z.begin());
    std::copy(window[t].begin(), window[t].end(), s.z.begin() + static_cast<std::ptrdiff_t>(nh));
    s.f.resize(nh); s.i.resize(nh); s.g.resize(nh); s.o.resize(nh);
    s.c_prev = c;
    s.c.resize(nh); s.tanh_c.resize(nh);
    for (std::size_t n = 0; n < nh; ++n) {
      std::array<double, 4> pre{};
      for (std::size_t gi = 0; gi < 4; ++gi) {
        const double* row = &p.W[gi].data[n * nz];
        double acc = p.b[gi][n];
        for (std::size_t j = 0; j < nz; ++j) acc += row[j] * s.z[j];
        pre[gi] = acc;
      }
      s.f[n] = model::sigmoid(pre[0]);
      s.i[n] = model::sigmoid(pre[1]);
      s.g[n] = std::tanh(pre[2]);
      s.o[n] = model::sigmoid(pre[3]);
      s.c[n] = s.f[n] * s.c_prev[n] + s.i[n] * s.g[n];
      s.tanh_c[n] = std::tanh(s.c[n]);
    }
    for (std::size_t n = 0; n < nh; ++n) {
      c[n] = s.c[n];
      h[n] = s.o[n] * s.tanh_c[n];
    }
  }

  std::vector<double> y(p.dense_b);
  for (std::size_t o = 0; o < no; ++o) {
    for (std::size_t j = 0; j < nh; ++j) y[o] += p.dense_W(o, j) * h[j];
  }
  double loss = 0.0;
  std::vector<double> dy(no);
  for (std::size_t o = 0; o < no; ++o) {
    const double e = y[o] - target[o];
    loss += e * e;
    dy[o] = 2.0 * e / static_cast<double>(no);
  }
  loss /= static_cast<double>(no);
  if (prediction != nullptr) *prediction = y;

  std::vector<double> dh(nh, 0.0), dc(nh, 0.0);
  for (std::size_t o = 0; o < no; ++o) {
    grad.dense_b[o] += dy[o];
    for (std::size_t j = 0; j < nh; ++j) {
      grad.dense_W(o, j) += dy[o] * h[j];
      dh[j] += p.dense_W(o, j) * dy[o];
    }
  }

  std::array<std::vector<double>, 4> da;
  for (auto& v : da) v.resize(nh);
  for (std::size_t t = window.size(); t-- > 0;) {
    const StepCache& s = steps[t];
    for (std::size_t n = 0; n < nh; ++n) {
      const double d_o = dh[n] * s.tanh_c[n];
      const double d_c = dc[n] + dh[n] * s.o[n] * (1.0 - s.tanh_c[n] * s.tanh_c[n]);
      const double d_f = d_c * s.c_prev[n];
      const double d_i = d_c * s.g[n];
      const double d_g = d_c * s.i[n];
      dc[n] = d_c * s.f[n];
      da[0][n] = d_f * s.f[n] * (1.0 - s.f[n]);
      da[1][n] = d_i * s.i[n] * (1.0 - s.i[n]);
      da[2][n] = d_g * (1.0 - s.g[n] * s.g[n]);
      da[3][n] = d_o * s.o[n] * (1.0 - s.o[n]);
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t gi = 0; gi < 4; ++gi) {
      const Matrix& w = p.W[gi];
      Matrix& gw = grad.W[gi];
      for (std::size_t n = 0; n < nh; ++n) {
        const double a = da[gi][n];
        grad.b[gi][n] += a;
        double* grow = &gw.data[n * nz];
        const double* wrow = &w.data[n * nz];
        for (std::size_t j = 0; j < nz; ++j) grow[j] += a * s.z[j];
        for (std::size_t j = 0; j < nh; ++j) dh[j] += wrow[j] * a;
      }
    }
  }
  return loss;
}

}  // namespace

double Normalization::apply(double v) const noexcept {
  if (max == min) return 0.0;
  return (v - min) / (max - min);
}

double Normalization::invert(double v) const noexcept { return min + v * (max - min); }

TimeSeries ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("file not found or unreadable: " + path.string());
  }
  TimeSeries series;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view field = trim(line);
    if (field.empty()) continue;
    const auto v = parse_double(field);
    if (!v) {
      if (row == 1) continue;  // header
      throw DataError(path.string() + ": malformed number at row " + std::to_string(row) + ": '" +
                      std::string(field) + "'");
    }
    if (!std::isfinite(*v)) {
      throw DataError(path.string() + ": non-finite value at row " + std::to_string(row));
    }
    series.values.push_back(*v);
  }
  if (in.bad()) throw DataError("read error: " + path.string());
  if (series.values.size() < kMinCsvRows) {
    throw DataError(path.string() + ": need at least " + std::to_string(kMinCsvRows) + " rows, got " +
                    std::to_string(series.values.size()));
  }
  return series;
}

DatasetSplit make_dataset(const TimeSeries& series, int seq_len, SplitRatio ratio, bool normalize) {
  if (seq_len < 1) throw InvalidArgument("seq_len must be >= 1");
  if (ratio.train < 1 || ratio.test < 0) throw InvalidArgument("split ratio must be train >= 1, test >= 0");
  const auto L = series.values.size();
  const auto sl = static_cast<std::size_t>(seq_len);
  if (L <= sl + 1) {
    throw DataError("series too short: " + std::to_string(L) + " values for seq_len " + std::to_string(seq_len));
  }
  for (double v : series.values) {
    if (!std::isfinite(v)) throw DataError("series contains non-finite values");
  }
  const std::size_t count = L - sl;
  const std::size_t n_train =
      count * static_cast<std::size_t>(ratio.train) / static_cast<std::size_t>(ratio.train + ratio.test);

  Normalization norm = Normalization::identity();
  if (normalize) {
    // Training windows cover values [0, n_train - 1 + seq_len].
    const auto last = static_cast<std::ptrdiff_t>(std::min(L, n_train + sl));
    const auto [lo, hi] = std::minmax_element(series.values.begin(), series.values.begin() + last);
    norm = Normalization{*lo, *hi};
  }

  DatasetSplit split;
  split.train.normalization = norm;
  split.test.normalization = norm;
  for (std::size_t k = 0; k < count; ++k) {
    Sample s;
    s.window.reserve(sl);
    for (std::size_t j = 0; j < sl; ++j) s.window.push_back(norm.apply(series.values[k + j]));
    s.target = norm.apply(series.values[k + sl]);
    (k < n_train ? split.train : split.test).samples.push_back(std::move(s));
  }
  return split;
}

TimeSeries synth_series(SynthKind kind, std::size_t length, std::uint64_t seed) {
  if (kind != SynthKind::SineNoise) throw InvalidArgument("unknown synthetic series kind");
  if (length < 64) throw InvalidArgument("synthetic series length must be >= 64");
  constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 2.0);
  TimeSeries ts;
  ts.period_seconds = 300.0;
  ts.values.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    ts.values.push_back(50.0 + 20.0 * std::sin(2.0 * kPi * static_cast<double>(t) / 288.0) + noise(rng));
  }
  return ts;
}

double loss_mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty() || pred.size() != target.size()) {
    throw InvalidArgument("loss_mse: inputs must be non-empty and of equal length");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = pred[k] - target[k];
    sum += e * e;
  }
  return sum / static_cast<double>(pred.size());
}

LossAndGrad grad_bptt(const LstmParams& params, const ModelConfig& config, const model::Sequence& window,
                      std::span<const double> target) {
  params.validate(config);
  LossAndGrad out;
  out.grad = LstmParams::zeros(config);
  out.loss = backprop_into(params, config, window, target, out.grad, &out.prediction);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size != 1) throw InvalidArgument("only batch_size 1 is supported");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be finite and >= 0");
  if (!(sched_gamma > 0.0 && sched_gamma <= 1.0)) throw InvalidArgument("scheduler gamma must be in (0, 1]");
  if (sched_step < 1) throw InvalidArgument("scheduler step must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("Adam epsilon must be > 0");
}

double TrainConfig::lr_at(int epoch) const { return lr * std::pow(sched_gamma, epoch / sched_step); }

Adam::Adam(const LstmParams& like, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(like), v_(like) {
  zero(m_);
  zero(v_);
}

void Adam::step(LstmParams& params, const LstmParams& grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  };
  for (std::size_t gi = 0; gi < 4; ++gi) {
    update(params.W[gi].data, grad.W[gi].data, m_.W[gi].data, v_.W[gi].data);
    update(params.b[gi], grad.b[gi], m_.b[gi], v_.b[gi]);
  }
  update(params.dense_W.data, grad.dense_W.data, m_.dense_W.data, v_.dense_W.data);
  update(params.dense_b, grad.dense_b, m_.dense_b, v_.dense_b);
}

TrainResult train(const LstmParams& params0, const ModelConfig& config, const TrainConfig& tc,
                  const WindowedDataset& train_set) {
  tc.validate();
  params0.validate(config);
  if (train_set.samples.empty()) throw InvalidArgument("training set is empty");
  if (config.input_size != 1) throw InvalidArgument("windowed datasets feed input_size 1 models");

  TrainResult result{params0, {}};
  Adam adam(params0, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
  LstmParams grad = LstmParams::zeros(config);
  std::vector<double> target(1);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = tc.lr_at(epoch);
    double sum = 0.0;
    for (const Sample& s : train_set.samples) {
      zero(grad);
      target[0] = s.target;
      const double loss =
          backprop_into(result.params, config, model::scalar_sequence(s.window), target, grad, nullptr);
      if (!std::isfinite(loss)) {
        throw DataError("training diverged: non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      sum += loss;
      adam.step(result.params, grad, lr);
    }
    result.epoch_loss.push_back(sum / static_cast<double>(train_set.samples.size()));
  }
  return result;
}

double evaluate_mse(const LstmParams& params, const ModelConfig& config, const WindowedDataset& data) {
  if (data.samples.empty()) throw InvalidArgument("evaluation set is empty");
  double sum = 0.0;
  for (const Sample& s : data.samples) {
    const auto y = model::forward(params, config, model::scalar_sequence(s.window));
    const double e = y[0] - s.target;
    sum += e * e;
  }
  return sum / static_cast<double>(data.samples.size());
}

}  // namespace qlstm::train

#include "qlstm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qlstm/artifact.hpp"
#include "qlstm/datapath.hpp"
#include "qlstm/error.hpp"
#include "qlstm/perf.hpp"
#include "qlstm/quantizer.hpp"
#include "qlstm/training.hpp"

namespace qlstm::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  // train / sweep data source
  std::string data;
  bool synthetic = false;
  std::size_t synthetic_length = 8064;
  int hidden = 20;
  int seq = 6;
  int epochs = 30;
  double lr = 0.01;

  // quantize / sweep
  std::string model;
  int frac = 8;
  int total = 16;
  int lut_depth = quant::kDefaultLutDepth;
  std::string mode;
  std::string frac_range = "4:12";
  std::vector<int> depths{64, 128, 256};
  bool gnuplot = false;

  // simulate
  std::string schedule = "parallel";
  std::string inputs;
  bool raw_inputs = false;
  bool with_ops = false;
  bool check = false;

  // report
  double clock_mhz = 100.0;
  double power_mw = perf::kDefaultPowerMw;
  std::optional<double> measured_us;
  int alu5_dsps = 3;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("I/O failure writing " + path.string());
}

model::ModelConfig model_config(const Options& o) { return model::ModelConfig{1, o.hidden, o.seq, 1}; }

train::TimeSeries load_series(const Options& o) {
  if (!o.data.empty()) return train::ingest_csv(o.data);
  return train::synth_series(train::SynthKind::SineNoise, o.synthetic_length, o.seed);
}

// Rows of comma-separated values, one row per time step.
model::Sequence read_inputs_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file not found or unreadable: " + path.string());
  model::Sequence rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      double v = 0.0;
      const char* first = b == std::string::npos ? cell.data() : cell.data() + b;
      const char* last = b == std::string::npos ? cell.data() : cell.data() + e + 1;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || first == last) {
        if (lineno == 1 && rows.empty()) {
          row.clear();
          break;  // header
        }
        throw DataError("malformed number at row " + std::to_string(lineno) + " of " + path.string());
      }
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_train(const Options& o, std::ostream& out) {
  const model::ModelConfig cfg = model_config(o);
  cfg.validate();
  train::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.lr = o.lr;
  tc.seed = o.seed;
  tc.validate();
  const train::DatasetSplit split = train::make_dataset(load_series(o), cfg.seq_len);
  const auto result = train::train(model::LstmParams::random(cfg, o.seed), cfg, tc, split.train);

  const fs::path dir(o.out_dir);
  artifact::save_float_model({cfg, result.params, split.train.normalization, o.seed}, dir / "model.json");
  std::ostringstream csv;
  csv << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, result.epoch_loss[e]);
    csv << buf;
  }
  write_text(dir / "loss.csv", csv.str());
  const double test_mse = train::evaluate_mse(result.params, cfg, split.test);
  std::snprintf(buf, sizeof buf, "%.6g", test_mse);
  out << "train windows: " << split.train.samples.size() << ", test windows: " << split.test.samples.size() << "\n"
      << "final training loss: " << result.epoch_loss.back() << "\n"
      << "test MSE (normalized): " << buf << "\n"
      << "wrote " << (dir / "model.json").string() << " and " << (dir / "loss.csv").string() << "\n";
  return kExitOk;
}

fs::path float_model_path(const Options& o) {
  return o.model.empty() ? fs::path(o.out_dir) / "model.json" : fs::path(o.model);
}

fs::path quantized_path(const Options& o) {
  return o.model.empty() ? fs::path(o.out_dir) / "quantized" : fs::path(o.model);
}

int cmd_quantize(const Options& o, std::ostream& out) {
  const fxp::Format format = fxp::Format::make(o.frac, o.total);
  const artifact::FloatModel fm = artifact::load_float_model(float_model_path(o));
  const quant::QuantizeResult qr = quant::quantize_model(fm.params, fm.config, format, o.lut_depth);
  for (const auto& w : qr.warnings) out << "warning: " << w << "\n";
  const fs::path dir = fs::path(o.out_dir) / "quantized";
  const artifact::Manifest m = artifact::emit_all(qr.model, dir, fm.normalization);
  out << "format " << format.to_string() << ", LUT depth " << o.lut_depth << ", max quantization error "
      << qr.max_abs_error() << "\n"
      << "wrote " << m.files.size() << " ROM files and " << (dir / artifact::kManifestName).string() << "\n";
  return kExitOk;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  int lo = 0;
  int hi = 0;
  const char* b = text.data();
  const char* e = text.data() + text.size();
  if (colon == std::string::npos || std::from_chars(b, b + colon, lo).ptr != b + colon ||
      std::from_chars(b + colon + 1, e, hi).ptr != e) {
    throw InvalidArgument("range must be LO:HI, got '" + text + "'");
  }
  return {lo, hi};
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const artifact::FloatModel fm = artifact::load_float_model(float_model_path(o));
  const train::DatasetSplit split = train::make_dataset(load_series(o), fm.config.seq_len);
  std::vector<quant::SweepRow> rows;
  std::string key;
  if (o.mode == "frac") {
    const auto [lo, hi] = parse_range(o.frac_range);
    rows = quant::sweep_frac_bits(fm.params, fm.config, split.test, lo, hi);
    key = "x";
  } else {
    const fxp::Format format = fxp::Format::make(o.frac, o.total);
    const auto base = quant::quantize_model(fm.params, fm.config, format).model;
    rows = quant::sweep_lut_depth(base, o.depths, split.test);
    key = "depth";
  }
  std::ostringstream csv;
  quant::write_sweep_csv(csv, key, rows);
  const fs::path dir(o.out_dir);
  write_text(dir / ("sweep_" + o.mode + ".csv"), csv.str());
  if (o.gnuplot) {
    std::ostringstream dat;
    dat << "# " << key << " mse\n";
    char buf[64];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d %.6g\n", r.key, r.mse);
      dat << buf;
    }
    write_text(dir / ("sweep_" + o.mode + ".dat"), dat.str());
  }
  out << csv.str();
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const fs::path path = quantized_path(o);
  const artifact::Manifest manifest = artifact::read_manifest(path);
  const quant::QuantizedModel qm = artifact::load_manifest(path);
  const auto& cfg = qm.config;

  model::Sequence inputs;
  if (!o.inputs.empty()) {
    inputs = read_inputs_csv(o.inputs);
    if (manifest.normalization && !o.raw_inputs) {
      for (auto& row : inputs) {
        for (double& v : row) v = manifest.normalization->apply(v);
      }
    }
  } else {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    inputs.assign(static_cast<std::size_t>(cfg.seq_len), std::vector<double>(static_cast<std::size_t>(cfg.input_size)));
    for (auto& row : inputs) {
      for (double& v : row) v = u(rng);
    }
  }
  if (inputs.size() != static_cast<std::size_t>(cfg.seq_len)) {
    throw DataError("inputs hold " + std::to_string(inputs.size()) + " time steps, model expects " +
                    std::to_string(cfg.seq_len));
  }
  for (const auto& row : inputs) {
    if (row.size() != static_cast<std::size_t>(cfg.input_size)) {
      throw DataError("each input row must hold " + std::to_string(cfg.input_size) + " value(s)");
    }
  }
  const quant::QSequence q = quant::quantize_sequence(inputs, qm.format);
  const sim::DatapathConfig dpc = sim::DatapathConfig::for_schedule(cfg, sim::parse_schedule(o.schedule));
  const sim::SimResult r = sim::simulate(qm, q, dpc);
  sim::check_schedule(r.trace);
  if (o.check) {
    const sim::CrossCheckReport rep = sim::cross_check(qm, q, dpc);
    out << "cross-check: " << rep.describe() << "\n";
    if (!rep.ok()) throw InvariantViolation("cross-check failed: " + rep.describe());
  }

  nlohmann::json doc;
  doc["schedule"] = o.schedule;
  nlohmann::json raw = nlohmann::json::array();
  nlohmann::json values = nlohmann::json::array();
  nlohmann::json denorm = nlohmann::json::array();
  for (const auto& w : r.outputs) {
    raw.push_back(w.raw);
    values.push_back(w.value());
    if (manifest.normalization) denorm.push_back(manifest.normalization->invert(w.value()));
  }
  doc["outputs_raw"] = raw;
  doc["outputs"] = values;
  doc["outputs_denormalized"] = manifest.normalization ? denorm : nlohmann::json(nullptr);
  doc["trace"] = nlohmann::json::parse(sim::trace_to_json(r.trace, o.with_ops));
  const fs::path file = fs::path(o.out_dir) / ("simulate_" + o.schedule + ".json");
  write_text(file, doc.dump(2) + "\n");

  out << "outputs (raw):";
  for (const auto& w : r.outputs) out << " " << w.raw;
  out << "\n";
  sim::print_trace_table(out, r.trace);
  out << "wrote " << file.string() << "\n";
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out, bool model_given) {
  model::ModelConfig cfg = model_config(o);
  fxp::Format format = fxp::Format::make(o.frac, o.total);
  int depth = o.lut_depth;
  if (model_given) {
    const artifact::Manifest m = artifact::read_manifest(o.model);
    cfg = m.config;
    format = m.format;
    depth = m.sigmoid_lut.depth;
  }
  const perf::PerfReport rep = perf::make_report(cfg, perf::ClockConfig::from_mhz(o.clock_mhz), o.power_mw,
                                                 o.measured_us, format, depth, o.alu5_dsps);
  const std::string json = perf::report_to_json(rep);
  write_text(fs::path(o.out_dir) / "report.json", json);
  out << json << "\n";
  perf::print_report_table(out, rep);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Fixed-point LSTM accelerator toolchain: train, quantize, sweep, simulate, report", "qlstm"};
  app.require_subcommand(1, 1);
  app.add_option("--seed", o.seed, "Random seed (falls back to QLSTM_SEED)")->envname("QLSTM_SEED")->capture_default_str();
  app.add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

  // --data is checked in the loader so a missing file is a data error, not a usage error.
  auto add_data = [&](CLI::App* sub) {
    auto* data = sub->add_option("--data", o.data, "CSV time series, one value per line");
    auto* syn = sub->add_flag("--synthetic", o.synthetic, "Use the seeded synthetic series (default)");
    data->excludes(syn);
    sub->add_option("--synthetic-length", o.synthetic_length, "Synthetic series length")
        ->check(CLI::Range(std::size_t{64}, std::size_t{1} << 24))
        ->capture_default_str();
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train the float model; writes model.json and loss.csv");
  add_data(train_cmd);
  train_cmd->add_option("--hidden", o.hidden, "Hidden size n_h")->check(CLI::Range(1, 1024))->capture_default_str();
  train_cmd->add_option("--seq", o.seq, "Sequence length n_seq")->check(CLI::Range(1, 4096))->capture_default_str();
  train_cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::Range(1, 100000))->capture_default_str();
  train_cmd->add_option("--lr", o.lr, "Initial learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();

  CLI::App* quant_cmd = app.add_subcommand("quantize", "Quantize a float model and emit ROM files + manifest");
  quant_cmd->add_option("--model", o.model, "Float model (default <out-dir>/model.json)");
  quant_cmd->add_option("--frac", o.frac, "Fractional bits x")->check(CLI::Range(1, 31))->capture_default_str();
  quant_cmd->add_option("--total", o.total, "Total bits y")->check(CLI::Range(2, 32))->capture_default_str();
  quant_cmd->add_option("--lut-depth", o.lut_depth, "LUT depth")
      ->check(CLI::IsMember({64, 128, 256, 512}))
      ->capture_default_str();

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Test MSE versus fractional bits or LUT depth");
  sweep_cmd->add_option("--mode", o.mode, "frac | lutdepth")->required()->check(CLI::IsMember({"frac", "lutdepth"}));
  sweep_cmd->add_option("--model", o.model, "Float model (default <out-dir>/model.json)");
  add_data(sweep_cmd);
  sweep_cmd->add_option("--frac-range", o.frac_range, "Fractional-bit range LO:HI (frac mode)")->capture_default_str();
  sweep_cmd->add_option("--depths", o.depths, "LUT depths (lutdepth mode)")
      ->delimiter(',')
      ->check(CLI::IsMember({64, 128, 256, 512}))
      ->capture_default_str();
  sweep_cmd->add_option("--frac", o.frac, "Fractional bits (lutdepth mode)")->check(CLI::Range(1, 31))->capture_default_str();
  sweep_cmd->add_option("--total", o.total, "Total bits (lutdepth mode)")->check(CLI::Range(2, 32))->capture_default_str();
  sweep_cmd->add_flag("--gnuplot", o.gnuplot, "Also write a whitespace-separated .dat file");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Cycle-accurate datapath simulation of a quantized model");
  sim_cmd->add_option("--model", o.model, "Quantized manifest or its directory (default <out-dir>/quantized)");
  sim_cmd->add_option("--schedule", o.schedule, "parallel | sequential")
      ->check(CLI::IsMember({"parallel", "sequential"}))
      ->capture_default_str();
  sim_cmd->add_option("--inputs", o.inputs, "CSV, one row of input_size values per time step (default: seeded random)");
  sim_cmd->add_flag("--raw-inputs", o.raw_inputs, "Inputs are already normalized");
  sim_cmd->add_flag("--ops", o.with_ops, "Include the per-operation log in the trace JSON");
  sim_cmd->add_flag("--check", o.check, "Cross-check against the functional model");

  CLI::App* report_cmd = app.add_subcommand("report", "Analytic timing, throughput, energy and resources");
  CLI::Option* model_opt = report_cmd->add_option("--model", o.model, "Quantized manifest (sets model/format/depth)");
  report_cmd->add_option("--hidden", o.hidden, "Hidden size n_h")->check(CLI::Range(1, 1024))->capture_default_str();
  report_cmd->add_option("--seq", o.seq, "Sequence length n_seq")->check(CLI::Range(1, 4096))->capture_default_str();
  report_cmd->add_option("--clock-mhz", o.clock_mhz, "Clock frequency")->check(CLI::PositiveNumber)->capture_default_str();
  report_cmd->add_option("--power-mw", o.power_mw, "Power")->check(CLI::PositiveNumber)->capture_default_str();
  report_cmd->add_option("--measured-us", o.measured_us, "Measured inference time")->check(CLI::PositiveNumber);
  report_cmd->add_option("--alu5-dsps", o.alu5_dsps, "DSPs in ALU5")->check(CLI::Range(1, 64))->capture_default_str();
  report_cmd->add_option("--frac", o.frac, "Fractional bits x")->check(CLI::Range(1, 31))->capture_default_str();
  report_cmd->add_option("--total", o.total, "Total bits y")->check(CLI::Range(2, 32))->capture_default_str();
  report_cmd->add_option("--lut-depth", o.lut_depth, "LUT depth")
      ->check(CLI::IsMember({64, 128, 256, 512}))
      ->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (quant_cmd->parsed()) return cmd_quantize(o, out);
    if (sweep_cmd->parsed()) return cmd_sweep(o, out);
    if (sim_cmd->parsed()) return cmd_simulate(o, out);
    if (report_cmd->parsed()) return cmd_report(o, out, model_opt->count() > 0);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvariantViolation& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace qlstm::cli

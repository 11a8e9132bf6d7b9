#include "qlstm/datapath.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "qlstm/error.hpp"
#include "qlstm/perf.hpp"

namespace qlstm::sim {

using fxp::WideAcc;
using fxp::Word;
using quant::ActivationKind;
using quant::ActivationLut;
using quant::QuantizedModel;

std::string_view to_string(Schedule schedule) noexcept {
  return schedule == Schedule::Parallel ? "parallel" : "sequential";
}

Schedule parse_schedule(std::string_view name) {
  if (name == "parallel") return Schedule::Parallel;
  if (name == "sequential") return Schedule::Sequential;
  throw InvalidArgument("unknown schedule '" + std::string(name) + "' (expected parallel or sequential)");
}

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::GateMatvec: return "gate-matvec";
    case Phase::Activation: return "activation";
    case Phase::Elementwise: return "elementwise";
    case Phase::Dense: return "dense";
  }
  return "?";
}

std::string_view to_string(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::GateRow: return "gate_row";
    case OpKind::Lookup: return "lookup";
    case OpKind::CellUpdate: return "cell_update";
    case OpKind::HiddenUpdate: return "hidden_update";
    case OpKind::DenseRow: return "dense_row";
  }
  return "?";
}

DatapathConfig DatapathConfig::for_schedule(const model::ModelConfig& model, Schedule schedule) {
  DatapathConfig c;
  c.model = model;
  c.schedule = schedule;
  c.gate_alu_count = schedule == Schedule::Parallel ? 4 : 1;
  return c;
}

void DatapathConfig::validate() const {
  model.validate();
  if (alu_latency_cycles < 1 || lut_latency_cycles < 1) throw InvalidArgument("datapath latencies must be >= 1");
  if (alu5_dsp_count < 1) throw InvalidArgument("ALU5 needs at least one DSP");
  const int expected = schedule == Schedule::Parallel ? 4 : 1;
  if (gate_alu_count != expected) {
    throw InvalidArgument("gate_alu_count must be " + std::to_string(expected) + " for the " +
                          std::string(to_string(schedule)) + " schedule");
  }
}

namespace {

enum class Queue { Gate = 0, Sigmoid = 1, Tanh = 2, Alu5 = 3, Dense = 4 };
constexpr std::size_t kQueues = 5;

Phase phase_of(Queue q) {
  switch (q) {
    case Queue::Gate: return Phase::GateMatvec;
    case Queue::Sigmoid:
    case Queue::Tanh: return Phase::Activation;
    case Queue::Alu5: return Phase::Elementwise;
    case Queue::Dense: return Phase::Dense;
  }
  return Phase::Dense;
}

// ROM address decode on raw words: drop the input bits below the bin width.
struct Rom {
  const ActivationLut* lut = nullptr;
  bool integer_decode = false;
  std::int64_t lo_raw = 0;
  std::int64_t span_raw = 0;

  explicit Rom(const ActivationLut& l) : lut(&l) {
    const double scale = l.format.scale();
    const double lo = l.input_lo * scale;
    const double span = (l.input_hi - l.input_lo) * scale;
    integer_decode = lo == std::floor(lo) && span == std::floor(span) && std::abs(lo) < 1e15 && span < 1e15;
    if (integer_decode) {
      lo_raw = static_cast<std::int64_t>(lo);
      span_raw = static_cast<std::int64_t>(span);
    }
  }

  Word read(Word v) const {
    if (!integer_decode) return quant::lut_lookup(*lut, v);
    const WideAcc num = (static_cast<WideAcc>(v.raw) - lo_raw) * lut->depth;
    std::int64_t addr = 0;
    if (num > 0) addr = static_cast<std::int64_t>(std::min<WideAcc>(num / span_raw, lut->depth - 1));
    return Word{lut->entries[static_cast<std::size_t>(addr)], lut->format};
  }
};

struct Cell {
  Word value;
  int gen = -1;  // recursion that wrote it; -1 = reset value
  std::int64_t ready = 0;
};

struct Op {
  OpKind kind = OpKind::GateRow;
  int step = 0;
  int row = 0;
  int lane = -1;
  Queue queue = Queue::Gate;
  int need = 1;
  int latency = 0;  // fixed-latency ops only
  std::vector<int> deps;
  int src = -1;  // lookups: producing op
  int src_lane = 0;

  std::int64_t start = -1;
  std::int64_t end = -1;
  bool done = false;
  std::vector<int> units;
  std::array<Word, 4> out{};

  // gate rows: MAC slot chain
  int slot = 0;
  std::int64_t slot_start = -1;
  std::int64_t slot_end = -1;
  std::array<WideAcc, 4> acc{};
};

struct Unit {
  std::string name;
  Queue queue;
  int op = -1;
  std::int64_t busy = 0;
};

class Engine {
 public:
  Engine(const QuantizedModel& rom, const DatapathConfig& cfg, const quant::QSequence& inputs)
      : m_(rom), cfg_(cfg), x_(inputs), sig_(rom.sigmoid_lut), tanh_(rom.tanh_lut) {
    nh_ = static_cast<std::size_t>(cfg.model.hidden_size);
    ni_ = static_cast<std::size_t>(cfg.model.input_size);
    nseq_ = cfg.model.seq_len;
    L_ = cfg.alu_latency_cycles;
    for (int k = 0; k < cfg.gate_alu_count; ++k) add_unit("alu" + std::to_string(k + 1), Queue::Gate);
    add_unit("sigmoid_lut", Queue::Sigmoid);
    add_unit("tanh_lut", Queue::Tanh);
    for (int k = 0; k < cfg.alu5_dsp_count; ++k) add_unit("alu5.dsp" + std::to_string(k), Queue::Alu5);
    add_unit("dense_alu", Queue::Dense);
    for (auto& bank : h_) bank.assign(nh_, Cell{Word{0, m_.format}, -1, 0});
    c_.assign(nh_, Cell{Word{0, m_.format}, -1, 0});
    build_program();
  }

  SimResult run();

 private:
  void add_unit(std::string name, Queue q) {
    queue_units_[static_cast<std::size_t>(q)].push_back(static_cast<int>(units_.size()));
    units_.push_back(Unit{std::move(name), q});
  }

  int add_op(OpKind kind, int step, int row, int lane, Queue q, int need, int latency, std::vector<int> deps) {
    Op op;
    op.kind = kind;
    op.step = step;
    op.row = row;
    op.lane = lane;
    op.queue = q;
    op.need = need;
    op.latency = latency;
    op.deps = std::move(deps);
    op.out.fill(Word{0, m_.format});
    ops_.push_back(std::move(op));
    const int id = static_cast<int>(ops_.size()) - 1;
    queues_[static_cast<std::size_t>(q)].push_back(id);
    return id;
  }

  void build_program();
  bool try_issue(int id);
  void start_fixed(Op& op);
  void complete(int id);
  bool advance_row(Op& op);
  bool read_operand(const Op& op, std::size_t col, Word& out) const;
  [[nodiscard]] std::int64_t cycle_cap() const;

  const QuantizedModel& m_;
  const DatapathConfig& cfg_;
  const quant::QSequence& x_;
  Rom sig_;
  Rom tanh_;
  std::size_t nh_ = 0, ni_ = 0;
  int nseq_ = 0;
  int L_ = 2;

  std::vector<Unit> units_;
  std::array<std::vector<int>, kQueues> queue_units_;
  std::array<std::deque<int>, kQueues> queues_;
  std::vector<Op> ops_;
  std::vector<int> active_;
  std::vector<std::vector<int>> hidden_ops_;  // [step][row]
  std::vector<int> dense_ops_;

  std::array<std::vector<Cell>, 2> h_;  // ping-pong banks, bank t & 1 holds h_t
  std::vector<Cell> c_;
  std::int64_t now_ = 0;
};

void Engine::build_program() {
  const bool parallel = cfg_.schedule == Schedule::Parallel;
  const int lut = cfg_.lut_latency_cycles;
  const int cell_dsps = std::min(2, cfg_.alu5_dsp_count);
  const int cell_latency = cell_dsps == 2 ? L_ : 2 * L_;
  std::vector<int> prev_cell(nh_, -1);
  int prev_hidden = -1;
  hidden_ops_.assign(static_cast<std::size_t>(nseq_), std::vector<int>(nh_, -1));

  for (int t = 0; t < nseq_; ++t) {
    for (std::size_t nn = 0; nn < nh_; ++nn) {
      const int n = static_cast<int>(nn);
      std::array<int, 4> rows{};
      std::array<int, 4> look{};
      if (parallel) {
        const int r = add_op(OpKind::GateRow, t, n, -1, Queue::Gate, 4, 0, {});
        rows.fill(r);
        for (int g = 0; g < 4; ++g) {
          const Queue q = g == static_cast<int>(model::Gate::Candidate) ? Queue::Tanh : Queue::Sigmoid;
          look[g] = add_op(OpKind::Lookup, t, n, g, q, 1, lut, {r});
          ops_[look[g]].src = r;
          ops_[look[g]].src_lane = g;
        }
      } else {
        for (int g = 0; g < 4; ++g) {
          std::vector<int> deps;
          if (g == 0 && prev_hidden >= 0) deps.push_back(prev_hidden);
          rows[g] = add_op(OpKind::GateRow, t, n, g, Queue::Gate, 1, 0, std::move(deps));
          const Queue q = g == static_cast<int>(model::Gate::Candidate) ? Queue::Tanh : Queue::Sigmoid;
          look[g] = add_op(OpKind::Lookup, t, n, g, q, 1, lut, {rows[g]});
          ops_[look[g]].src = rows[g];
          ops_[look[g]].src_lane = 0;
        }
      }
      std::vector<int> cell_deps{look[0], look[1], look[2]};
      if (!parallel) cell_deps.push_back(rows[3]);
      if (prev_cell[nn] >= 0) cell_deps.push_back(prev_cell[nn]);
      const int cell = add_op(OpKind::CellUpdate, t, n, -1, Queue::Alu5, cell_dsps, cell_latency, cell_deps);
      const int tc = add_op(OpKind::Lookup, t, n, kCellLane, Queue::Tanh, 1, lut, {cell});
      ops_[tc].src = cell;
      const int hid = add_op(OpKind::HiddenUpdate, t, n, -1, Queue::Alu5, 1, L_, {look[3], tc});
      prev_cell[nn] = cell;
      prev_hidden = hid;
      hidden_ops_[static_cast<std::size_t>(t)][nn] = hid;
    }
  }
  const auto& last = hidden_ops_.back();
  const int dense_latency = static_cast<int>(nh_ + 1) * L_;
  for (int o = 0; o < m_.config.out_features; ++o) {
    dense_ops_.push_back(add_op(OpKind::DenseRow, -1, o, -1, Queue::Dense, 1, dense_latency, last));
  }
}

// Operand for MAC slot `col` of the [h | x] row; false while h is not yet written.
bool Engine::read_operand(const Op& op, std::size_t col, Word& out) const {
  if (col >= nh_) {
    out = x_[static_cast<std::size_t>(op.step)][col - nh_];
    return true;
  }
  if (op.step == 0) {
    out = Word{0, m_.format};
    return true;
  }
  const Cell& cell = h_[static_cast<std::size_t>(op.step - 1) & 1U][col];
  if (cell.gen > op.step - 1) {
    throw InvariantViolation("datapath hazard: h_" + std::to_string(op.step - 1) + "[" + std::to_string(col) +
                             "] overwritten before row " + std::to_string(op.row) + " of recursion " +
                             std::to_string(op.step) + " read it");
  }
  if (cell.gen < op.step - 1 || cell.ready > now_) return false;
  out = cell.value;
  return true;
}

// Starts the next MAC slot of a gate row if its operand is available.
bool Engine::advance_row(Op& op) {
  const std::size_t slots = 1 + nh_ + ni_;
  if (op.slot_end > now_ || static_cast<std::size_t>(op.slot) >= slots) return false;
  const bool parallel = op.lane < 0;
  const auto n = static_cast<std::size_t>(op.row);
  if (op.slot == 0) {
    for (int g = 0; g < 4; ++g) {
      if (!parallel && g != op.lane) continue;
      op.acc[parallel ? g : 0] = fxp::lift(m_.b[static_cast<std::size_t>(g)].at(n));
    }
  } else {
    const auto col = static_cast<std::size_t>(op.slot - 1);
    Word z;
    if (!read_operand(op, col, z)) return false;
    for (int g = 0; g < 4; ++g) {
      if (!parallel && g != op.lane) continue;
      auto& acc = op.acc[parallel ? g : 0];
      acc = fxp::mac(acc, m_.W[static_cast<std::size_t>(g)].at(n, col), z);
    }
  }
  ++op.slot;
  op.slot_start = now_;
  op.slot_end = now_ + L_;
  return true;
}

void Engine::start_fixed(Op& op) {
  op.end = now_ + op.latency;
  switch (op.kind) {
    case OpKind::Lookup: {
      const Word pre = ops_[op.src].out[op.src_lane];
      const bool sigmoid = op.lane != kCellLane && op.lane != static_cast<int>(model::Gate::Candidate);
      op.out[0] = (sigmoid ? sig_ : tanh_).read(pre);
      break;
    }
    case OpKind::CellUpdate: {
      const Cell& prev = c_[static_cast<std::size_t>(op.row)];
      if (prev.gen != op.step - 1) {
        throw InvariantViolation("datapath hazard: C[" + std::to_string(op.row) + "] generation " +
                                 std::to_string(prev.gen) + " at recursion " + std::to_string(op.step));
      }
      const Word f = ops_[op.deps[0]].out[0];
      const Word i = ops_[op.deps[1]].out[0];
      const Word g = ops_[op.deps[2]].out[0];
      op.out[0] = fxp::finalize(fxp::mac(fxp::mac(0, f, prev.value), i, g), m_.format);
      break;
    }
    case OpKind::HiddenUpdate:
      op.out[0] = fxp::mul(ops_[op.deps[0]].out[0], ops_[op.deps[1]].out[0]);
      break;
    case OpKind::DenseRow: {
      const auto o = static_cast<std::size_t>(op.row);
      const auto& bank = h_[static_cast<std::size_t>(nseq_ - 1) & 1U];
      WideAcc acc = fxp::lift(m_.dense_b.at(o));
      for (std::size_t j = 0; j < nh_; ++j) {
        if (bank[j].gen != nseq_ - 1 || bank[j].ready > now_) {
          throw InvariantViolation("datapath hazard: dense layer read stale h[" + std::to_string(j) + "]");
        }
        acc = fxp::mac(acc, m_.dense_W.at(o, j), bank[j].value);
      }
      op.out[0] = fxp::finalize(acc, m_.format);
      break;
    }
    case OpKind::GateRow: break;
  }
}

bool Engine::try_issue(int id) {
  Op& op = ops_[id];
  for (int d : op.deps) {
    if (!ops_[d].done) return false;
  }
  std::vector<int> free_units;
  for (int u : queue_units_[static_cast<std::size_t>(op.queue)]) {
    if (units_[u].op < 0) free_units.push_back(u);
    if (static_cast<int>(free_units.size()) == op.need) break;
  }
  if (static_cast<int>(free_units.size()) < op.need) return false;
  op.units = free_units;
  for (int u : free_units) units_[u].op = id;
  op.start = now_;
  if (op.kind == OpKind::GateRow) {
    advance_row(op);  // the bias slot never stalls
  } else {
    start_fixed(op);
  }
  active_.push_back(id);
  return true;
}

void Engine::complete(int id) {
  Op& op = ops_[id];
  if (op.kind == OpKind::GateRow) {
    op.end = now_;
    const bool parallel = op.lane < 0;
    for (int k = 0; k < (parallel ? 4 : 1); ++k) op.out[k] = fxp::finalize(op.acc[k], m_.format);
  } else if (op.kind == OpKind::CellUpdate) {
    c_[static_cast<std::size_t>(op.row)] = Cell{op.out[0], op.step, now_};
  } else if (op.kind == OpKind::HiddenUpdate) {
    h_[static_cast<std::size_t>(op.step) & 1U][static_cast<std::size_t>(op.row)] = Cell{op.out[0], op.step, now_};
  }
  op.done = true;
  for (int u : op.units) units_[u].op = -1;
}

std::int64_t Engine::cycle_cap() const {
  std::int64_t sum = 16;
  for (const Op& op : ops_) {
    sum += op.kind == OpKind::GateRow ? static_cast<std::int64_t>(1 + nh_ + ni_) * L_ : op.latency;
  }
  return 2 * sum;
}

SimResult Engine::run() {
  CycleTrace trace;
  trace.schedule = cfg_.schedule;
  trace.model = cfg_.model;
  const std::int64_t cap = cycle_cap();
  std::size_t remaining = ops_.size();
  std::int64_t idle = 0;
  const std::size_t slots = 1 + nh_ + ni_;

  while (remaining > 0) {
    if (now_ > cap) throw InvariantViolation("datapath made no progress within " + std::to_string(cap) + " cycles");

    // Results due this cycle become visible before anything reads them.
    for (auto it = active_.begin(); it != active_.end();) {
      Op& op = ops_[*it];
      const bool finished = op.kind == OpKind::GateRow
                                ? static_cast<std::size_t>(op.slot) == slots && op.slot_end <= now_
                                : op.end <= now_;
      if (finished) {
        complete(*it);
        --remaining;
        it = active_.erase(it);
      } else {
        ++it;
      }
    }
    for (int id : active_) {
      if (ops_[id].kind == OpKind::GateRow) advance_row(ops_[id]);
    }
    std::array<int, 4> issued_phase{};
    for (std::size_t q = 0; q < kQueues; ++q) {
      while (!queues_[q].empty() && try_issue(queues_[q].front())) {
        ++issued_phase[static_cast<std::size_t>(phase_of(static_cast<Queue>(q)))];
        queues_[q].pop_front();
      }
    }
    if (remaining == 0) break;

    // Accounting for [now, now + 1).
    std::array<bool, kQueues> computing{};
    for (Unit& u : units_) {
      if (u.op < 0) continue;
      const Op& op = ops_[u.op];
      const bool busy = op.kind == OpKind::GateRow ? op.slot_start <= now_ && now_ < op.slot_end
                                                   : op.start <= now_ && now_ < op.end;
      if (busy) {
        ++u.busy;
        computing[static_cast<std::size_t>(u.queue)] = true;
      }
    }
    std::optional<Phase> phase;
    if (computing[static_cast<std::size_t>(Queue::Gate)]) {
      phase = Phase::GateMatvec;
    } else if (computing[static_cast<std::size_t>(Queue::Alu5)]) {
      phase = Phase::Elementwise;
    } else if (computing[static_cast<std::size_t>(Queue::Sigmoid)] || computing[static_cast<std::size_t>(Queue::Tanh)]) {
      phase = Phase::Activation;
    } else if (computing[static_cast<std::size_t>(Queue::Dense)]) {
      phase = Phase::Dense;
    }
    if (phase) {
      trace.phase_cycles[static_cast<std::size_t>(*phase)] += 1 + idle;
      idle = 0;
    } else {
      ++idle;  // charged to the next phase that does work
    }
    ++now_;
  }
  if (idle > 0) trace.phase_cycles[static_cast<std::size_t>(Phase::Dense)] += idle;

  trace.total_cycles = now_;
  std::int64_t prev_end = 0;
  for (const auto& row_ops : hidden_ops_) {
    std::int64_t end = 0;
    for (int id : row_ops) end = std::max(end, ops_[id].end);
    trace.per_recursion.push_back(end - prev_end);
    prev_end = end;
  }
  trace.dense_cycles = trace.total_cycles - prev_end;
  for (const Unit& u : units_) {
    trace.unit_names.push_back(u.name);
    trace.unit_busy[u.name] = u.busy;
  }
  trace.ops.reserve(ops_.size());
  for (const Op& op : ops_) trace.ops.push_back(OpRecord{op.kind, op.step, op.row, op.lane, op.units, op.start, op.end});

  SimResult result;
  for (int id : dense_ops_) result.outputs.push_back(ops_[id].out[0]);
  result.trace = std::move(trace);
  return result;
}

}  // namespace

Datapath::Datapath(const QuantizedModel& qm, DatapathConfig config) : rom_(qm), config_(config) {
  config_.validate();
  rom_.validate();
  if (!(rom_.config == config_.model)) throw InvalidArgument("config inconsistency: datapath model differs from quantized model");
}

void Datapath::corrupt_lut(ActivationKind kind, std::size_t index, std::int32_t raw) {
  ActivationLut& lut = kind == ActivationKind::Sigmoid ? rom_.sigmoid_lut : rom_.tanh_lut;
  if (index >= lut.entries.size()) throw InvalidArgument("LUT index out of range");
  lut.entries[index] = fxp::Word::from_raw(raw, lut.format).raw;
}

SimResult Datapath::run(const quant::QSequence& inputs) const {
  if (inputs.size() != static_cast<std::size_t>(config_.model.seq_len)) {
    throw InvalidArgument("shape mismatch: inputs length vs seq_len");
  }
  for (const auto& x : inputs) {
    if (x.size() != static_cast<std::size_t>(config_.model.input_size)) {
      throw InvalidArgument("shape mismatch: x_t length vs input_size");
    }
    for (const Word& w : x) {
      if (w.format != rom_.format) throw InvalidArgument("input format does not match model format");
    }
  }
  Engine engine(rom_, config_, inputs);
  return engine.run();
}

SimResult simulate(const QuantizedModel& qm, const quant::QSequence& inputs, const DatapathConfig& dpc) {
  return Datapath(qm, dpc).run(inputs);
}

std::map<Phase, double> phase_breakdown(const CycleTrace& trace) {
  if (trace.total_cycles <= 0) throw InvalidArgument("empty trace");
  std::map<Phase, double> out;
  for (Phase p : kPhases) out[p] = static_cast<double>(trace.phase(p)) / static_cast<double>(trace.total_cycles);
  return out;
}

namespace {

std::string describe(const OpRecord& r) {
  std::ostringstream s;
  s << to_string(r.kind) << "(t=" << r.step << ", n=" << r.row << ", lane=" << r.lane << ") [" << r.start << ", "
    << r.end << ")";
  return s.str();
}

}  // namespace

void check_schedule(const CycleTrace& trace) {
  std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> per_unit(trace.unit_names.size());
  for (const OpRecord& r : trace.ops) {
    if (r.start < 0 || r.end < r.start) throw InvariantViolation("unscheduled operation " + describe(r));
    for (int u : r.units) per_unit.at(static_cast<std::size_t>(u)).emplace_back(r.start, r.end);
  }
  for (std::size_t u = 0; u < per_unit.size(); ++u) {
    auto& iv = per_unit[u];
    std::sort(iv.begin(), iv.end());
    for (std::size_t k = 1; k < iv.size(); ++k) {
      if (iv[k].first < iv[k - 1].second) {
        throw InvariantViolation("unit " + trace.unit_names[u] + " runs two operations at cycle " +
                                 std::to_string(iv[k].first));
      }
    }
  }

  // Index the per-row operations, then check data dependencies.
  struct RowOps {
    std::array<const OpRecord*, 4> rows{};
    std::array<const OpRecord*, 5> look{};
    const OpRecord* cell = nullptr;
    const OpRecord* hidden = nullptr;
  };
  const auto nh = static_cast<std::size_t>(trace.model.hidden_size);
  std::vector<RowOps> idx(static_cast<std::size_t>(trace.model.seq_len) * nh);
  std::vector<const OpRecord*> dense;
  for (const OpRecord& r : trace.ops) {
    if (r.kind == OpKind::DenseRow) {
      dense.push_back(&r);
      continue;
    }
    RowOps& e = idx.at(static_cast<std::size_t>(r.step) * nh + static_cast<std::size_t>(r.row));
    switch (r.kind) {
      case OpKind::GateRow:
        if (r.lane < 0) e.rows.fill(&r);
        else e.rows[static_cast<std::size_t>(r.lane)] = &r;
        break;
      case OpKind::Lookup: e.look[static_cast<std::size_t>(r.lane)] = &r; break;
      case OpKind::CellUpdate: e.cell = &r; break;
      case OpKind::HiddenUpdate: e.hidden = &r; break;
      case OpKind::DenseRow: break;
    }
  }
  auto after = [](const OpRecord* later, const OpRecord* earlier) {
    if (later == nullptr || earlier == nullptr) throw InvariantViolation("incomplete operation log");
    if (later->start < earlier->end) {
      throw InvariantViolation(describe(*later) + " starts before " + describe(*earlier) + " completes");
    }
  };
  std::int64_t last_h = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const RowOps& e = idx[k];
    for (std::size_t g = 0; g < 4; ++g) after(e.look[g], e.rows[g]);
    for (std::size_t g = 0; g < 3; ++g) after(e.cell, e.look[g]);
    after(e.look[kCellLane], e.cell);
    after(e.hidden, e.look[3]);
    after(e.hidden, e.look[kCellLane]);
    if (k + nh < idx.size()) after(idx[k + nh].cell, e.cell);
    if (k / nh + 1 == static_cast<std::size_t>(trace.model.seq_len)) last_h = std::max(last_h, e.hidden->end);
  }
  for (const OpRecord* d : dense) {
    if (d->start < last_h) throw InvariantViolation(describe(*d) + " starts before the last recursion completes");
  }
}

std::string CrossCheckReport::describe() const {
  std::ostringstream s;
  if (first_mismatch) {
    s << "output mismatch at element " << *first_mismatch << ": q_forward raw " << expected_raw << ", datapath raw "
      << actual_raw;
  } else {
    s << outputs_compared << " output(s) bit-exact";
  }
  if (cycles_checked) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "; cycles simulated %lld vs analytic %lld (deviation %.2f%%)",
                  static_cast<long long>(simulated_cycles), static_cast<long long>(analytic_cycles),
                  100.0 * cycle_deviation);
    s << buf;
  }
  return s.str();
}

CrossCheckReport cross_check(const QuantizedModel& qm, const quant::QSequence& inputs, const DatapathConfig& dpc,
                             const std::optional<LutFault>& fault) {
  Datapath dp(qm, dpc);
  if (fault) dp.corrupt_lut(fault->kind, fault->index, fault->raw);
  const SimResult sim = dp.run(inputs);
  const std::vector<Word> ref = quant::q_forward(qm, inputs, quant::ActivationMode::Lut);

  CrossCheckReport r;
  r.outputs_compared = ref.size();
  for (std::size_t k = 0; k < ref.size(); ++k) {
    if (k >= sim.outputs.size() || !(sim.outputs[k] == ref[k])) {
      r.first_mismatch = k;
      r.expected_raw = ref[k].raw;
      r.actual_raw = k < sim.outputs.size() ? sim.outputs[k].raw : 0;
      break;
    }
  }
  r.simulated_cycles = sim.trace.total_cycles;
  r.analytic_cycles = perf::cycles(dpc.model).n_total;
  r.cycle_deviation = std::abs(static_cast<double>(r.simulated_cycles - r.analytic_cycles)) /
                      static_cast<double>(r.analytic_cycles);
  r.cycles_checked = dpc.schedule == Schedule::Parallel;
  return r;
}

std::string trace_to_json(const CycleTrace& trace, bool include_ops) {
  nlohmann::json j;
  j["schedule"] = std::string(to_string(trace.schedule));
  j["model"] = {{"input_size", trace.model.input_size},
                {"hidden_size", trace.model.hidden_size},
                {"seq_len", trace.model.seq_len},
                {"out_features", trace.model.out_features}};
  j["total_cycles"] = trace.total_cycles;
  j["per_recursion_cycles"] = trace.per_recursion;
  j["dense_cycles"] = trace.dense_cycles;
  j["unit_busy_cycles"] = trace.unit_busy;
  nlohmann::json phases;
  nlohmann::json fractions;
  for (Phase p : kPhases) {
    phases[std::string(to_string(p))] = trace.phase(p);
    fractions[std::string(to_string(p))] =
        trace.total_cycles > 0 ? static_cast<double>(trace.phase(p)) / static_cast<double>(trace.total_cycles) : 0.0;
  }
  j["phase_cycles"] = phases;
  j["phase_fractions"] = fractions;
  if (include_ops) {
    nlohmann::json ops = nlohmann::json::array();
    for (const OpRecord& r : trace.ops) {
      nlohmann::json units = nlohmann::json::array();
      for (int u : r.units) units.push_back(trace.unit_names[static_cast<std::size_t>(u)]);
      ops.push_back({{"kind", std::string(to_string(r.kind))},
                     {"step", r.step},
                     {"row", r.row},
                     {"lane", r.lane},
                     {"units", units},
                     {"start", r.start},
                     {"end", r.end}});
    }
    j["ops"] = ops;
  }
  return j.dump(2) + "\n";
}

void print_trace_table(std::ostream& out, const CycleTrace& trace) {
  char buf[128];
  out << "schedule: " << to_string(trace.schedule) << "\n";
  out << "recursion  cycles\n";
  for (std::size_t t = 0; t < trace.per_recursion.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%9zu  %6lld\n", t + 1, static_cast<long long>(trace.per_recursion[t]));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%9s  %6lld\n", "dense", static_cast<long long>(trace.dense_cycles));
  out << buf;
  std::snprintf(buf, sizeof buf, "%9s  %6lld\n", "total", static_cast<long long>(trace.total_cycles));
  out << buf << "\nphase        cycles  fraction\n";
  for (Phase p : kPhases) {
    const double frac = trace.total_cycles > 0
                            ? static_cast<double>(trace.phase(p)) / static_cast<double>(trace.total_cycles)
                            : 0.0;
    std::snprintf(buf, sizeof buf, "%-11s  %6lld  %7.4f\n", std::string(to_string(p)).c_str(),
                  static_cast<long long>(trace.phase(p)), frac);
    out << buf;
  }
  out << "\nunit         busy\n";
  for (const auto& name : trace.unit_names) {
    std::snprintf(buf, sizeof buf, "%-11s  %6lld\n", name.c_str(), static_cast<long long>(trace.unit_busy.at(name)));
    out << buf;
  }
}

}  // namespace qlstm::sim

#include "qlstm/artifact.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "qlstm/error.hpp"

namespace qlstm::artifact {

namespace fs = std::filesystem;
using nlohmann::json;
using quant::ActivationKind;
using quant::QuantizedModel;

const FileEntry* Manifest::find(std::string_view role) const noexcept {
  for (const auto& f : files) {
    if (f.role == role) return &f;
  }
  return nullptr;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw InvariantViolation("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(kHex[digest[k] >> 4]);
    out.push_back(kHex[digest[k] & 0xF]);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("file not found or unreadable: " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw DataError("I/O failure writing " + path.string());
}

json config_json(const model::ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"hidden_size", c.hidden_size},
          {"seq_len", c.seq_len},
          {"out_features", c.out_features}};
}

model::ModelConfig config_from(const json& j) {
  model::ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.out_features = j.at("out_features").get<int>();
  c.validate();
  return c;
}

json lut_json(const LutInfo& l) { return {{"depth", l.depth}, {"input_lo", l.input_lo}, {"input_hi", l.input_hi}}; }

LutInfo lut_from(const json& j) {
  return LutInfo{j.at("depth").get<int>(), j.at("input_lo").get<double>(), j.at("input_hi").get<double>()};
}

json manifest_json(const Manifest& m, bool with_volatile) {
  json j;
  j["kind"] = "quantized";
  j["config"] = config_json(m.config);
  j["fixed_point"] = {{"frac_bits", m.format.frac_bits}, {"total_bits", m.format.total_bits}};
  j["luts"] = {{"sigmoid", lut_json(m.sigmoid_lut)}, {"tanh", lut_json(m.tanh_lut)}};
  j["layout"] = std::string(kLayout);
  j["normalization"] =
      m.normalization ? json{{"min", m.normalization->min}, {"max", m.normalization->max}} : json(nullptr);
  json files = json::array();
  for (const auto& f : m.files) {
    files.push_back({{"role", f.role}, {"file", f.file}, {"shape", {f.rows, f.cols}}, {"sha256", f.sha256}});
  }
  j["files"] = files;
  j["tool_version"] = m.tool_version;
  if (with_volatile) {
    j["created_at"] = m.created_at;
    j["content_sha256"] = m.content_sha256;
  }
  return j;
}

struct RomSpec {
  std::string role;
  const std::vector<std::int32_t>* raw;
  std::size_t rows;
  std::size_t cols;
};

std::vector<RomSpec> rom_specs(const QuantizedModel& qm) {
  std::vector<RomSpec> out;
  for (model::Gate g : model::kGates) {
    const std::string s(model::gate_suffix(g));
    const auto& w = qm.gate_W(g);
    const auto& b = qm.gate_b(g);
    out.push_back({"W_" + s, &w.raw, w.rows, w.cols});
    out.push_back({"b_" + s, &b.raw, b.rows, b.cols});
  }
  out.push_back({"dense_W", &qm.dense_W.raw, qm.dense_W.rows, qm.dense_W.cols});
  out.push_back({"dense_b", &qm.dense_b.raw, qm.dense_b.rows, qm.dense_b.cols});
  out.push_back({"sigmoid_lut", &qm.sigmoid_lut.entries, qm.sigmoid_lut.entries.size(), 1});
  out.push_back({"tanh_lut", &qm.tanh_lut.entries, qm.tanh_lut.entries.size(), 1});
  return out;
}

std::vector<std::int32_t> parse_rom(const std::string& text, const FileEntry& entry, fxp::Format format) {
  std::vector<std::int32_t> raw;
  std::size_t pos = 0;
  std::size_t line = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    ++line;
    try {
      raw.push_back(parse_hex_word(std::string_view(text).substr(pos, eol - pos), format));
    } catch (const DataError& e) {
      throw DataError(entry.file + " line " + std::to_string(line) + ": " + e.what());
    }
    pos = eol + 1;
  }
  if (raw.size() != entry.rows * entry.cols) {
    throw DataError("shape mismatch in " + entry.file + ": " + std::to_string(raw.size()) + " words, expected " +
                    std::to_string(entry.rows) + "x" + std::to_string(entry.cols));
  }
  return raw;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string hex_word(std::int32_t raw, fxp::Format format) {
  const int digits = format.hex_digits();
  const std::uint64_t mask = (std::uint64_t{1} << (4 * digits)) - 1;
  const std::uint64_t bits = static_cast<std::uint64_t>(static_cast<std::int64_t>(raw)) & mask;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*llX", digits, static_cast<unsigned long long>(bits));
  return buf;
}

std::int32_t parse_hex_word(std::string_view text, fxp::Format format) {
  const int digits = format.hex_digits();
  if (static_cast<int>(text.size()) != digits) {
    throw DataError("malformed hex word '" + std::string(text) + "' (expected " + std::to_string(digits) +
                    " digits)");
  }
  std::uint64_t bits = 0;
  for (char ch : text) {
    int v = 0;
    if (ch >= '0' && ch <= '9') v = ch - '0';
    else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
    else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
    else throw DataError("malformed hex word '" + std::string(text) + "'");
    bits = (bits << 4) | static_cast<std::uint64_t>(v);
  }
  const int width = 4 * digits;
  auto value = static_cast<std::int64_t>(bits);
  if (bits >> (width - 1)) value -= static_cast<std::int64_t>(std::uint64_t{1} << width);
  if (value < format.raw_min() || value > format.raw_max()) {
    throw DataError("hex word '" + std::string(text) + "' out of range for " + format.to_string());
  }
  return static_cast<std::int32_t>(value);
}

std::string rom_text(std::span<const std::int32_t> raw, fxp::Format format) {
  std::string out;
  out.reserve(raw.size() * static_cast<std::size_t>(format.hex_digits() + 1));
  for (std::int32_t r : raw) {
    if (r < format.raw_min() || r > format.raw_max()) {
      throw InvalidArgument("raw word " + std::to_string(r) + " out of range for " + format.to_string());
    }
    out += hex_word(r, format);
    out += '\n';
  }
  return out;
}

void emit_rom(std::span<const std::int32_t> raw, fxp::Format format, const fs::path& path) {
  write_file(path, rom_text(raw, format));
}

std::string current_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0') t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_content_hash(const Manifest& manifest) {
  return sha256_hex(manifest_json(manifest, false).dump(2));
}

std::string manifest_to_json(const Manifest& manifest) { return manifest_json(manifest, true).dump(2) + "\n"; }

Manifest manifest_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("kind", std::string()) != "quantized") throw DataError("not a quantized-model manifest");
    Manifest m;
    m.config = config_from(j.at("config"));
    m.format = fxp::Format::make(j.at("fixed_point").at("frac_bits").get<int>(),
                                 j.at("fixed_point").at("total_bits").get<int>());
    m.sigmoid_lut = lut_from(j.at("luts").at("sigmoid"));
    m.tanh_lut = lut_from(j.at("luts").at("tanh"));
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
      m.normalization = train::Normalization{j["normalization"].at("min").get<double>(),
                                             j["normalization"].at("max").get<double>()};
    }
    for (const auto& f : j.at("files")) {
      const auto& shape = f.at("shape");
      m.files.push_back(FileEntry{f.at("role").get<std::string>(), f.at("file").get<std::string>(),
                                  shape.at(0).get<std::size_t>(), shape.at(1).get<std::size_t>(),
                                  f.at("sha256").get<std::string>()});
    }
    m.tool_version = j.value("tool_version", std::string());
    m.created_at = j.value("created_at", std::string());
    m.content_sha256 = j.value("content_sha256", std::string());
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

Manifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  return manifest_from_json(read_file(file));
}

Manifest emit_all(const QuantizedModel& qm, const fs::path& dir,
                  const std::optional<train::Normalization>& normalization, const std::string& created_at) {
  qm.validate();
  Manifest m;
  m.config = qm.config;
  m.format = qm.format;
  m.sigmoid_lut = LutInfo{qm.sigmoid_lut.depth, qm.sigmoid_lut.input_lo, qm.sigmoid_lut.input_hi};
  m.tanh_lut = LutInfo{qm.tanh_lut.depth, qm.tanh_lut.input_lo, qm.tanh_lut.input_hi};
  m.normalization = normalization;
  m.created_at = created_at;

  std::vector<fs::path> created;
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    for (const RomSpec& spec : rom_specs(qm)) {
      const std::string file = spec.role + ".hex";
      const fs::path path = dir / file;
      const bool existed = fs::exists(path);
      const std::string text = rom_text(*spec.raw, qm.format);
      if (!existed) created.push_back(path);
      write_file(path, text);
      m.files.push_back(FileEntry{spec.role, file, spec.rows, spec.cols, sha256_hex(text)});
    }
    m.content_sha256 = manifest_content_hash(m);
    const fs::path manifest_path = dir / kManifestName;
    if (!fs::exists(manifest_path)) created.push_back(manifest_path);
    write_file(manifest_path, manifest_to_json(m));
  } catch (...) {
    for (const auto& p : created) {
      std::error_code ignore;
      if (fs::is_regular_file(p, ignore)) fs::remove(p, ignore);
    }
    throw;
  }
  return m;
}

QuantizedModel load_manifest(const fs::path& path) {
  const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
  const Manifest m = read_manifest(path);

  std::string missing;
  for (std::string_view role : kRoles) {
    const FileEntry* f = m.find(role);
    if (f == nullptr || !fs::exists(dir / f->file)) missing += (missing.empty() ? "" : ", ") + std::string(role);
  }
  if (!missing.empty()) throw DataError("missing ROM file(s) for role(s): " + missing);

  auto load = [&](std::string_view role) {
    const FileEntry& f = *m.find(role);
    const std::string text = read_file(dir / f.file);
    if (sha256_hex(text) != f.sha256) throw DataError("hash mismatch: " + f.file);
    return std::make_pair(&f, parse_rom(text, f, m.format));
  };
  auto tensor = [&](std::string_view role, std::size_t rows, std::size_t cols) {
    auto [f, raw] = load(role);
    if (f->rows != rows || f->cols != cols) {
      throw DataError("shape mismatch: " + f->file + " is " + std::to_string(f->rows) + "x" +
                      std::to_string(f->cols) + ", model expects " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
    fxp::Tensor t(m.format, rows, cols);
    t.raw = std::move(raw);
    return t;
  };
  auto lut = [&](std::string_view role, ActivationKind kind, const LutInfo& info) {
    auto [f, raw] = load(role);
    if (f->rows != static_cast<std::size_t>(info.depth) || f->cols != 1) {
      throw DataError("shape mismatch: " + f->file + " does not hold " + std::to_string(info.depth) + " entries");
    }
    return quant::ActivationLut{kind, info.depth, info.input_lo, info.input_hi, m.format, std::move(raw)};
  };

  QuantizedModel qm;
  qm.config = m.config;
  qm.format = m.format;
  const auto nh = static_cast<std::size_t>(m.config.hidden_size);
  const auto no = static_cast<std::size_t>(m.config.out_features);
  for (model::Gate g : model::kGates) {
    const std::string s(model::gate_suffix(g));
    qm.W[static_cast<std::size_t>(g)] = tensor("W_" + s, nh, m.config.concat_size());
    qm.b[static_cast<std::size_t>(g)] = tensor("b_" + s, nh, 1);
  }
  qm.dense_W = tensor("dense_W", no, nh);
  qm.dense_b = tensor("dense_b", no, 1);
  qm.sigmoid_lut = lut("sigmoid_lut", ActivationKind::Sigmoid, m.sigmoid_lut);
  qm.tanh_lut = lut("tanh_lut", ActivationKind::Tanh, m.tanh_lut);
  try {
    qm.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("inconsistent artifact set: ") + e.what());
  }
  return qm;
}

std::string float_model_to_json(const FloatModel& fm) {
  json j;
  j["kind"] = "float";
  j["config"] = config_json(fm.config);
  j["normalization"] = {{"min", fm.normalization.min}, {"max", fm.normalization.max}};
  j["seed"] = fm.seed;
  json params;
  fm.params.for_each_tensor([&](const std::string& name, const std::vector<double>& v) { params[name] = v; });
  j["params"] = params;
  j["tool_version"] = std::string(kToolVersion);
  return j.dump(2) + "\n";
}

void save_float_model(const FloatModel& fm, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, float_model_to_json(fm));
}

FloatModel load_float_model(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    const json j = json::parse(text);
    if (j.value("kind", std::string()) != "float") throw DataError(path.string() + " is not a float-model manifest");
    FloatModel fm;
    fm.config = config_from(j.at("config"));
    fm.normalization = {j.at("normalization").at("min").get<double>(), j.at("normalization").at("max").get<double>()};
    fm.seed = j.value("seed", std::uint64_t{1});
    fm.params = model::LstmParams::zeros(fm.config);
    const json& p = j.at("params");
    auto fill = [&](const std::string& name, std::vector<double>& dst) {
      auto v = p.at(name).get<std::vector<double>>();
      if (v.size() != dst.size()) throw DataError("shape mismatch for " + name + " in " + path.string());
      dst = std::move(v);
    };
    for (model::Gate g : model::kGates) {
      const std::string s(model::gate_suffix(g));
      fill("W_" + s, fm.params.gate_W(g).data);
      fill("b_" + s, fm.params.gate_b(g));
    }
    fill("dense_W", fm.params.dense_W.data);
    fill("dense_b", fm.params.dense_b);
    fm.params.validate(fm.config);
    return fm;
  } catch (const json::exception& e) {
    throw DataError("malformed model file " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError("malformed model file " + path.string() + ": " + e.what());
  }
}

}  // namespace qlstm::artifact

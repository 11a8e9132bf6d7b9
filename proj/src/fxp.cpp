#include "qlstm/fxp.hpp"

#include <cmath>
#include <sstream>

#include "qlstm/error.hpp"

namespace qlstm::fxp {

namespace {

void require_same(Format a, Format b) {
  if (a != b) {
    throw InvalidArgument("fixed-point format mismatch: " + a.to_string() + " vs " + b.to_string());
  }
}

}  // namespace

Format Format::make(int frac_bits, int total_bits) {
  Format f{frac_bits, total_bits};
  if (!f.valid()) {
    std::ostringstream msg;
    msg << "invalid fixed-point format Q(" << frac_bits << "," << total_bits
        << "): need 1 <= frac_bits < total_bits <= 32";
    throw InvalidArgument(msg.str());
  }
  return f;
}

bool Format::valid() const noexcept {
  return frac_bits >= 1 && frac_bits < total_bits && total_bits <= 32;
}

std::int64_t Format::raw_min() const noexcept { return -(std::int64_t{1} << (total_bits - 1)); }
std::int64_t Format::raw_max() const noexcept { return (std::int64_t{1} << (total_bits - 1)) - 1; }
double Format::scale() const noexcept { return std::ldexp(1.0, frac_bits); }
double Format::lsb() const noexcept { return std::ldexp(1.0, -frac_bits); }
double Format::min_value() const noexcept { return static_cast<double>(raw_min()) * lsb(); }
double Format::max_value() const noexcept { return static_cast<double>(raw_max()) * lsb(); }
int Format::hex_digits() const noexcept { return (total_bits + 3) / 4; }

std::string Format::to_string() const {
  return "Q(" + std::to_string(frac_bits) + "," + std::to_string(total_bits) + ")";
}

Word Word::from_raw(std::int64_t raw, Format format) {
  if (!format.valid()) {
    throw InvalidArgument("invalid fixed-point format " + format.to_string());
  }
  if (raw < format.raw_min() || raw > format.raw_max()) {
    throw InvalidArgument("raw value " + std::to_string(raw) + " out of range for " + format.to_string());
  }
  return Word{static_cast<std::int32_t>(raw), format};
}

double Word::value() const noexcept { return static_cast<double>(raw) * format.lsb(); }

std::int32_t saturate(WideAcc raw, Format format) noexcept {
  if (raw > format.raw_max()) return static_cast<std::int32_t>(format.raw_max());
  if (raw < format.raw_min()) return static_cast<std::int32_t>(format.raw_min());
  return static_cast<std::int32_t>(raw);
}

WideAcc round_shift(WideAcc value, int shift) noexcept {
  if (shift == 0) return value;
  const WideAcc half = WideAcc{1} << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

Word quantize(double value, Format format) {
  if (!std::isfinite(value)) {
    throw InvalidArgument("cannot quantize non-finite model parameter");
  }
  // Scaling by a power of two is exact; clamp before rounding so the
  // integer conversion cannot overflow.
  const double scaled = std::ldexp(value, format.frac_bits);
  const auto lo = static_cast<double>(format.raw_min());
  const auto hi = static_cast<double>(format.raw_max());
  if (scaled <= lo) return Word{static_cast<std::int32_t>(format.raw_min()), format};
  if (scaled >= hi) return Word{static_cast<std::int32_t>(format.raw_max()), format};
  return Word{static_cast<std::int32_t>(std::round(scaled)), format};
}

Word add(Word a, Word b) {
  require_same(a.format, b.format);
  return Word{saturate(WideAcc{a.raw} + b.raw, a.format), a.format};
}

Word mul(Word a, Word b) {
  require_same(a.format, b.format);
  const WideAcc product = static_cast<WideAcc>(a.raw) * b.raw;
  return Word{saturate(round_shift(product, a.format.frac_bits), a.format), a.format};
}

WideAcc mac(WideAcc acc, Word a, Word b) {
  require_same(a.format, b.format);
  return acc + static_cast<WideAcc>(a.raw) * b.raw;
}

WideAcc lift(Word w) noexcept { return static_cast<WideAcc>(w.raw) << w.format.frac_bits; }

Word finalize(WideAcc acc, Format format) {
  return Word{saturate(round_shift(acc, format.frac_bits), format), format};
}

Word dot(std::span<const Word> a, std::span<const Word> b) {
  if (a.size() != b.size() || a.empty()) {
    throw InvalidArgument("dot: operands must be non-empty and of equal length");
  }
  if (a.size() > kMaxDotLength) {
    throw InvalidArgument("dot: vector length exceeds accumulator sizing");
  }
  WideAcc acc = 0;
  for (std::size_t k = 0; k < a.size(); ++k) acc = mac(acc, a[k], b[k]);
  return finalize(acc, a.front().format);
}

}  // namespace qlstm::fxp

#pragma once

// Two's-complement fixed-point arithmetic in Q(x, y) notation: x fractional
// bits out of a y-bit word (sign included). Rounding is half-away-from-zero,
// overflow saturates. Everything here is a pure function of its arguments.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qlstm::fxp {

/// Q(frac_bits, total_bits). Valid when 1 <= frac_bits < total_bits <= 32.
struct Format {
  int frac_bits = 8;
  int total_bits = 16;

  /// Validating constructor; throws InvalidArgument.
  static Format make(int frac_bits, int total_bits);

  [[nodiscard]] bool valid() const noexcept;
  [[nodiscard]] std::int64_t raw_min() const noexcept;
  [[nodiscard]] std::int64_t raw_max() const noexcept;
  [[nodiscard]] double scale() const noexcept;  // 2^frac_bits
  [[nodiscard]] double lsb() const noexcept;    // 2^-frac_bits
  [[nodiscard]] double min_value() const noexcept;
  [[nodiscard]] double max_value() const noexcept;
  [[nodiscard]] int hex_digits() const noexcept;  // ceil(total_bits / 4)
  [[nodiscard]] std::string to_string() const;

  friend bool operator==(const Format&, const Format&) = default;
};

/// Exactly raw / 2^frac_bits. `raw` is always inside the format's range.
struct Word {
  std::int32_t raw = 0;
  Format format;

  /// Throws InvalidArgument if `raw` is out of range for `format`.
  static Word from_raw(std::int64_t raw, Format format);

  [[nodiscard]] double value() const noexcept;

  friend bool operator==(const Word&, const Word&) = default;
};

/// Accumulator wide enough for 2*32 + 10 bits: dot products of up to 1024
/// full-range 32-bit products cannot overflow it.
__extension__ typedef __int128 WideAcc;

inline constexpr std::size_t kMaxDotLength = 1024;

/// Clamps to the format's raw range.
std::int32_t saturate(WideAcc raw, Format format) noexcept;

/// value / 2^shift rounded half away from zero (shift >= 0).
WideAcc round_shift(WideAcc value, int shift) noexcept;

/// round-half-away(value * 2^x), saturated. Throws InvalidArgument on NaN/inf.
Word quantize(double value, Format format);

/// Saturating sum. Throws InvalidArgument on format mismatch.
Word add(Word a, Word b);

/// Exact double-width product, one rounding, saturation.
Word mul(Word a, Word b);

/// acc + a.raw * b.raw with no rounding. The accumulator is scaled by 2^(2x).
WideAcc mac(WideAcc acc, Word a, Word b);

/// A Q(x) term lifted to the accumulator's 2^(2x) scale (e.g. a bias).
WideAcc lift(Word w) noexcept;

/// Single rounding of a 2^(2x)-scaled accumulator back to Q(x, y).
Word finalize(WideAcc acc, Format format);

/// Exact dot product with one final rounding. Lengths must match and be
/// at most kMaxDotLength.
Word dot(std::span<const Word> a, std::span<const Word> b);

/// Row-major matrix (or vector when cols == 1) of raw words sharing a format.
struct Tensor {
  Format format;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> raw;

  Tensor() = default;
  Tensor(Format f, std::size_t r, std::size_t c) : format(f), rows(r), cols(c), raw(r * c, 0) {}

  [[nodiscard]] std::size_t size() const noexcept { return raw.size(); }
  [[nodiscard]] Word at(std::size_t r, std::size_t c) const { return Word{raw[r * cols + c], format}; }
  [[nodiscard]] Word at(std::size_t i) const { return Word{raw[i], format}; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace qlstm::fxp

#include <doctest.h>

#include <limits>
#include <random>

#include "oracle.hpp"
#include "qlstm/error.hpp"
#include "qlstm/fxp.hpp"

using namespace qlstm;
using fxp::Format;
using fxp::Word;

namespace {
const Format kQ8_16 = Format::make(8, 16);
Word q(double v, Format f = kQ8_16) { return fxp::quantize(v, f); }
}  // namespace

TEST_SUITE("fxp") {
  TEST_CASE("format bounds") {
    CHECK(Format::make(1, 2).valid());
    CHECK(Format::make(31, 32).valid());
    CHECK_THROWS_AS(Format::make(0, 8), InvalidArgument);
    CHECK_THROWS_AS(Format::make(8, 8), InvalidArgument);
    CHECK_THROWS_AS(Format::make(8, 33), InvalidArgument);
    CHECK(kQ8_16.raw_min() == -32768);
    CHECK(kQ8_16.raw_max() == 32767);
    CHECK(kQ8_16.min_value() == -128.0);
    CHECK(kQ8_16.max_value() == doctest::Approx(127.99609375));
    CHECK(kQ8_16.hex_digits() == 4);
    CHECK(Format::make(3, 10).hex_digits() == 3);
  }

  TEST_CASE("quantize") {
    CHECK(q(-0.5).raw == -128);
    CHECK(q(0.1).raw == 26);
    CHECK(q(0.1).value() == 0.1015625);
    CHECK(q(1000.0).raw == 32767);
    CHECK(q(-1000.0).raw == -32768);
    CHECK(q(0.5 / 256).raw == 1);     // half rounds away from zero
    CHECK(q(-0.5 / 256).raw == -1);
    CHECK(q(1.5 / 256).raw == 2);
    CHECK(q(-2.5 / 256).raw == -3);
    CHECK_THROWS_AS(q(std::numeric_limits<double>::quiet_NaN()), InvalidArgument);
    CHECK_THROWS_AS(q(std::numeric_limits<double>::infinity()), InvalidArgument);
  }

  TEST_CASE("quantize round-trips every word") {
    const Format f = Format::make(3, 8);
    for (std::int64_t r = f.raw_min(); r <= f.raw_max(); ++r) {
      const Word w = Word::from_raw(r, f);
      CHECK(fxp::quantize(w.value(), f) == w);
    }
  }

  TEST_CASE("add") {
    CHECK(fxp::add(q(1.5), q(2.0)).value() == 3.5);
    CHECK(fxp::add(q(1000), q(1000)).raw == 32767);
    CHECK(fxp::add(q(-0.25), q(0.25)).raw == 0);
    CHECK_THROWS_AS(fxp::add(q(1.0), q(1.0, Format::make(4, 16))), InvalidArgument);
  }

  TEST_CASE("mul") {
    CHECK(fxp::mul(q(1.5), q(2.0)).value() == 3.0);
    CHECK(fxp::mul(q(0.0), q(-77.25)).raw == 0);
    const Word lsb = Word::from_raw(1, kQ8_16);
    CHECK(fxp::mul(lsb, lsb).raw == 0);
    CHECK(fxp::mul(q(100), q(100)).raw == 32767);
    CHECK(fxp::mul(q(-100), q(100)).raw == -32768);
    CHECK_THROWS_AS(fxp::mul(q(1.0), q(1.0, Format::make(4, 16))), InvalidArgument);
  }

  TEST_CASE("mac and dot") {
    CHECK(fxp::mac(0, q(1.0), q(1.0)) == 65536);
    const std::vector<Word> a{q(1.0), q(-1.0)};
    const std::vector<Word> b{q(1.0), q(1.0)};
    CHECK(fxp::dot(a, b).raw == 0);

    const std::vector<Word> tenth(21, q(0.1));
    const std::vector<std::int64_t> raw(21, 26);
    CHECK(fxp::dot(tenth, tenth).raw == oracle::dot(raw, raw, kQ8_16));
    CHECK(fxp::dot(tenth, tenth).raw == 55);  // 21 * 676 / 256 = 55.45

    CHECK_THROWS_AS(fxp::dot(std::vector<Word>{}, std::vector<Word>{}), InvalidArgument);
    CHECK_THROWS_AS(fxp::dot(a, tenth), InvalidArgument);
  }

  TEST_CASE("single rounding in dot products matches the rational oracle") {
    std::mt19937_64 rng(11);
    for (Format f : {kQ8_16, Format::make(3, 8), Format::make(12, 24), Format::make(20, 32)}) {
      std::uniform_int_distribution<std::int64_t> dist(f.raw_min(), f.raw_max());
      std::uniform_int_distribution<int> len(1, 64);
      for (int trial = 0; trial < 200; ++trial) {
        const int n = len(rng);
        std::vector<std::int64_t> ra(n), rb(n);
        std::vector<Word> a, b;
        for (int k = 0; k < n; ++k) {
          ra[k] = dist(rng);
          rb[k] = dist(rng) / (trial % 2 == 0 ? 64 : 1);
          a.push_back(Word::from_raw(ra[k], f));
          b.push_back(Word::from_raw(rb[k], f));
        }
        REQUIRE(fxp::dot(a, b).raw == oracle::dot(ra, rb, f));
      }
    }
  }

  TEST_CASE("add/mul agree with the rational oracle on random wide formats") {
    std::mt19937_64 rng(5);
    for (Format f : {kQ8_16, Format::make(16, 32), Format::make(1, 2), Format::make(31, 32)}) {
      std::uniform_int_distribution<std::int64_t> dist(f.raw_min(), f.raw_max());
      for (int trial = 0; trial < 2000; ++trial) {
        const std::int64_t a = dist(rng);
        const std::int64_t b = dist(rng);
        const Word wa = Word::from_raw(a, f);
        const Word wb = Word::from_raw(b, f);
        REQUIRE(fxp::add(wa, wb).raw == oracle::add(a, b, f));
        REQUIRE(fxp::mul(wa, wb).raw == oracle::mul(a, b, f));
      }
    }
  }

  TEST_CASE("saturation is idempotent") {
    for (Format f : {kQ8_16, Format::make(3, 8), Format::make(31, 32)}) {
      for (fxp::WideAcc v : {fxp::WideAcc{0}, fxp::WideAcc{1} << 40, -(fxp::WideAcc{1} << 40), fxp::WideAcc{123},
                             fxp::WideAcc{-99999}}) {
        const auto once = fxp::saturate(v, f);
        CHECK(fxp::saturate(once, f) == once);
      }
    }
  }

  TEST_CASE("from_raw range check") {
    CHECK_THROWS_AS(Word::from_raw(32768, kQ8_16), InvalidArgument);
    CHECK_THROWS_AS(Word::from_raw(-32769, kQ8_16), InvalidArgument);
    CHECK(Word::from_raw(-32768, kQ8_16).value() == -128.0);
  }
}

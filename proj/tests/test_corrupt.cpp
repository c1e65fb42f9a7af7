// Copyright 2026 The sirfit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <bit>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sirfit/corrupt.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/rng.hpp"
#include "sirfit/wire.hpp"

using namespace sirfit;
using namespace sirfit::corrupt;
using wire::FieldValue;
using wire::Transaction;

namespace {

FieldValue Apply(const FieldValue& v, PatternKind kind, uint64_t seed = 1) {
  Rng rng(seed);
  return Corrupt(v, Pattern::Of(kind), rng);
}

size_t PopcountDiff(const std::vector<uint8_t>& a,
                    const std::vector<uint8_t>& b) {
  REQUIRE(a.size() == b.size());
  size_t bits = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    bits += static_cast<size_t>(std::popcount(static_cast<uint8_t>(a[i] ^ b[i])));
  }
  return bits;
}

}  // namespace

TEST_CASE("numeric patterns hit the documented values") {
  CHECK(Apply(int32_t{41}, PatternKind::kZero) == FieldValue(int32_t{0}));
  CHECK(Apply(int32_t{41}, PatternKind::kOffByOne) == FieldValue(int32_t{42}));
  CHECK(Apply(int32_t{41}, PatternKind::kOffByOffset) ==
        FieldValue(int32_t{57}));  // default offset 16
  CHECK(Apply(int32_t{41}, PatternKind::kNegate) == FieldValue(int32_t{-41}));
  CHECK(Apply(int32_t{41}, PatternKind::kMax) ==
        FieldValue(std::numeric_limits<int32_t>::max()));
  CHECK(Apply(int32_t{41}, PatternKind::kMin) ==
        FieldValue(std::numeric_limits<int32_t>::min()));

  // Two's-complement edges are documented degenerate coincidences.
  CHECK(Apply(std::numeric_limits<int32_t>::max(), PatternKind::kOffByOne) ==
        FieldValue(std::numeric_limits<int32_t>::min()));
  CHECK(Apply(std::numeric_limits<int32_t>::min(), PatternKind::kNegate) ==
        FieldValue(std::numeric_limits<int32_t>::min()));

  CHECK(Apply(int64_t{-7}, PatternKind::kNegate) == FieldValue(int64_t{7}));
  CHECK(Apply(int64_t{1}, PatternKind::kMax) ==
        FieldValue(std::numeric_limits<int64_t>::max()));

  Pattern offset = Pattern::Of(PatternKind::kOffByOffset);
  offset.offset = -3;
  Rng rng(1);
  CHECK(Corrupt(FieldValue(int32_t{10}), offset, rng) ==
        FieldValue(int32_t{7}));
}

TEST_CASE("float patterns") {
  CHECK(Apply(2.5, PatternKind::kZero) == FieldValue(0.0));
  CHECK(Apply(2.5, PatternKind::kOffByOne) == FieldValue(3.5));
  CHECK(Apply(2.5, PatternKind::kNegate) == FieldValue(-2.5));
  CHECK(Apply(2.5, PatternKind::kMax) ==
        FieldValue(std::numeric_limits<double>::max()));
  CHECK(Apply(2.5, PatternKind::kMin) ==
        FieldValue(std::numeric_limits<double>::lowest()));
}

TEST_CASE("bool patterns") {
  CHECK(Apply(true, PatternKind::kZero) == FieldValue(false));
  CHECK(Apply(true, PatternKind::kNegate) == FieldValue(false));
  CHECK(Apply(false, PatternKind::kNegate) == FieldValue(true));
  CHECK(Apply(false, PatternKind::kMax) == FieldValue(true));
  CHECK(Apply(true, PatternKind::kRandomValue) == FieldValue(false));
}

TEST_CASE("string truncation keeps the first half of the characters") {
  CHECK(Apply(std::string("whitebalance=auto"), PatternKind::kTruncate) ==
        FieldValue(std::string("whitebal")));  // 17 chars -> 8
  CHECK(Apply(std::string("ab"), PatternKind::kTruncate) ==
        FieldValue(std::string("a")));
  CHECK(Apply(std::string("a"), PatternKind::kTruncate) ==
        FieldValue(std::string("")));
  // Multibyte: truncation must not split a code point.
  FieldValue out = Apply(std::string("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9"),
                         PatternKind::kTruncate);
  CHECK(out == FieldValue(std::string("\xc3\xa9\xc3\xa9")));
  CHECK(wire::IsValidUtf8(std::get<std::string>(out)));
}

TEST_CASE("null-string and substring replacement") {
  CHECK(Apply(std::string("content"), PatternKind::kNullString) ==
        FieldValue(std::string("")));

  std::string original = "intent.action.BATTERY_CHANGED";
  auto replaced =
      std::get<std::string>(Apply(original, PatternKind::kSubstringReplace));
  CHECK(replaced != original);
  CHECK(replaced.size() == original.size());
  size_t diff = 0;
  for (size_t i = 0; i < original.size(); ++i) {
    if (original[i] != replaced[i]) ++diff;
  }
  CHECK(diff == 1);
}

TEST_CASE("categorical replacement avoids the original value") {
  Pattern p = Pattern::Of(PatternKind::kCategoricalReplace);
  p.domain = {"auto", "sunny", "cloudy"};
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto out = std::get<std::string>(
        Corrupt(FieldValue(std::string("auto")), p, rng));
    CHECK((out == "sunny" || out == "cloudy"));
  }
  // A value outside the domain maps into the domain.
  Rng rng(7);
  auto out = std::get<std::string>(
      Corrupt(FieldValue(std::string("manual")), p, rng));
  CHECK((out == "auto" || out == "sunny" || out == "cloudy"));

  Pattern empty = Pattern::Of(PatternKind::kCategoricalReplace);
  Rng rng2(8);
  CHECK_THROWS_AS(Corrupt(FieldValue(std::string("x")), empty, rng2),
                  InvalidArgumentError);
}

TEST_CASE("bit-flip flips exactly ceil(len/64) distinct bits") {
  SUBCASE("64 zero bytes carry exactly one set bit afterwards") {
    std::vector<uint8_t> zeros(64, 0);
    auto flipped =
        std::get<std::vector<uint8_t>>(Apply(zeros, PatternKind::kBitFlip));
    CHECK(PopcountDiff(zeros, flipped) == 1);
  }
  SUBCASE("flip count tracks the byte length") {
    Rng data_rng(5);
    for (size_t len : {1u, 63u, 64u, 65u, 128u, 129u, 300u}) {
      std::vector<uint8_t> blob(len);
      for (auto& b : blob) b = static_cast<uint8_t>(data_rng.Next());
      auto flipped = std::get<std::vector<uint8_t>>(
          Apply(blob, PatternKind::kBitFlip, 1234 + len));
      CHECK(PopcountDiff(blob, flipped) == (len + 63) / 64);
    }
  }
}

TEST_CASE("random-value always differs from the input") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    int32_t v = static_cast<int32_t>(rng.Next());
    CHECK(Apply(v, PatternKind::kRandomValue, rng.Next()) != FieldValue(v));
    double d = rng.NextDouble();
    CHECK(Apply(d, PatternKind::kRandomValue, rng.Next()) != FieldValue(d));
  }
}

TEST_CASE("corruption is deterministic for a fixed seed") {
  std::vector<uint8_t> blob(100);
  Rng fill(3);
  for (auto& b : blob) b = static_cast<uint8_t>(fill.Next());

  auto a = Apply(blob, PatternKind::kBitFlip, 42);
  auto b = Apply(blob, PatternKind::kBitFlip, 42);
  auto c = Apply(blob, PatternKind::kBitFlip, 43);
  CHECK(a == b);
  CHECK(a != c);

  auto s1 = Apply(std::string("determinism"), PatternKind::kSubstringReplace, 9);
  auto s2 = Apply(std::string("determinism"), PatternKind::kSubstringReplace, 9);
  CHECK(s1 == s2);
}

TEST_CASE("inapplicable pattern and kind pairs are rejected") {
  CHECK_THROWS_AS(Apply(int32_t{1}, PatternKind::kNullString),
                  InvalidArgumentError);
  CHECK_THROWS_AS(Apply(int32_t{1}, PatternKind::kBitFlip),
                  InvalidArgumentError);
  CHECK_THROWS_AS(Apply(std::string("x"), PatternKind::kZero),
                  InvalidArgumentError);
  CHECK_THROWS_AS(Apply(std::string("x"), PatternKind::kBitFlip),
                  InvalidArgumentError);
  CHECK_THROWS_AS(Apply(std::vector<uint8_t>{1}, PatternKind::kNegate),
                  InvalidArgumentError);
  CHECK_THROWS_AS(Apply(true, PatternKind::kOffByOne), InvalidArgumentError);
  CHECK_THROWS_AS(Apply(true, PatternKind::kTruncate), InvalidArgumentError);
  CHECK_THROWS_AS(Apply(2.0, PatternKind::kSubstringReplace),
                  InvalidArgumentError);
}

TEST_CASE("effectiveness: corrupted output differs outside documented edges") {
  Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    int32_t v = static_cast<int32_t>(rng.Next()) | 1;  // nonzero
    for (PatternKind k :
         {PatternKind::kZero, PatternKind::kOffByOne, PatternKind::kOffByOffset,
          PatternKind::kNegate, PatternKind::kRandomValue}) {
      if (k == PatternKind::kZero && v == 0) continue;
      CHECK(Apply(v, k, rng.Next()) != FieldValue(v));
    }
    std::string s = "sample-string-" + std::to_string(i);
    for (PatternKind k : {PatternKind::kNullString, PatternKind::kTruncate,
                          PatternKind::kSubstringReplace}) {
      CHECK(Apply(s, k, rng.Next()) != FieldValue(s));
    }
  }
}

TEST_CASE("transaction corruption honors the selector") {
  Transaction t;
  t.code = 7;
  t.flags = 0x01;
  t.fields.push_back({1, int32_t{10}});
  t.fields.push_back({2, int64_t{20}});
  t.fields.push_back({3, 30.0});

  SUBCASE("all fields change, code and flags stay put") {
    Rng rng(1);
    Transaction out =
        CorruptTransaction(t, Selector::All(), Pattern::Of(PatternKind::kNegate),
                           rng);
    CHECK(out.code == 7);
    CHECK(out.flags == 0x01);
    CHECK(out.fields[0].value == FieldValue(int32_t{-10}));
    CHECK(out.fields[1].value == FieldValue(int64_t{-20}));
    CHECK(out.fields[2].value == FieldValue(-30.0));
  }
  SUBCASE("tag selector touches only the named field") {
    Rng rng(1);
    Transaction out = CorruptTransaction(t, Selector::Tag(2),
                                         Pattern::Of(PatternKind::kZero), rng);
    CHECK(out.fields[0].value == t.fields[0].value);
    CHECK(out.fields[1].value == FieldValue(int64_t{0}));
    CHECK(out.fields[2].value == t.fields[2].value);
  }
  SUBCASE("absent tag is an error") {
    Rng rng(1);
    CHECK_THROWS_AS(CorruptTransaction(t, Selector::Tag(9),
                                       Pattern::Of(PatternKind::kZero), rng),
                    InvalidArgumentError);
  }
  SUBCASE("code selector rewrites the code only") {
    Rng rng(1);
    Transaction out = CorruptTransaction(t, Selector::Code(),
                                         Pattern::Of(PatternKind::kOffByOne),
                                         rng);
    CHECK(out.code == 8);
    CHECK(out.fields == t.fields);
  }
  SUBCASE("flags selector") {
    Rng rng(1);
    Transaction out = CorruptTransaction(t, Selector::Flags(),
                                         Pattern::Of(PatternKind::kZero), rng);
    CHECK(out.flags == 0);
    CHECK(out.code == 7);
  }
  SUBCASE("mismatched pattern under all is an error") {
    Transaction mixed = t;
    mixed.fields.push_back({4, std::string("text")});
    Rng rng(1);
    CHECK_THROWS_AS(CorruptTransaction(mixed, Selector::All(),
                                       Pattern::Of(PatternKind::kNegate), rng),
                    InvalidArgumentError);
  }
}

TEST_CASE("auto corruption handles mixed field kinds") {
  Transaction t;
  t.fields.push_back({1, int32_t{10}});
  t.fields.push_back({2, true});
  t.fields.push_back({3, std::string("categorical")});
  t.fields.push_back({4, std::vector<uint8_t>(16, 0xaa)});

  Rng rng(5);
  Transaction out = CorruptTransactionAuto(t, Selector::All(), rng);
  for (size_t i = 0; i < t.fields.size(); ++i) {
    CAPTURE(i);
    CHECK(out.fields[i].value != t.fields[i].value);
  }
  // The corrupted transaction still encodes.
  CHECK_NOTHROW(wire::Encode(out));
}

TEST_CASE("struct-field corruption reaches into nested frames") {
  Transaction inner;
  inner.code = 3;
  inner.fields.push_back({1, std::string("whitebalance=auto")});
  inner.fields.push_back({2, int32_t{800}});

  Transaction outer;
  outer.code = 99;
  outer.fields.push_back({1, wire::Encode(inner)});

  Pattern p = Pattern::Of(PatternKind::kStructField);
  p.struct_selector = std::make_shared<Selector>(Selector::Tag(2));
  p.inner = std::make_shared<Pattern>(Pattern::Of(PatternKind::kMax));

  Rng rng(1);
  Transaction out = CorruptTransaction(outer, Selector::Tag(1), p, rng);
  auto nested = std::get<Transaction>(
      wire::Decode(std::get<std::vector<uint8_t>>(out.fields[0].value)));
  CHECK(nested.fields[0].value == inner.fields[0].value);
  CHECK(nested.fields[1].value ==
        FieldValue(std::numeric_limits<int32_t>::max()));

  SUBCASE("non-frame blobs are rejected") {
    Transaction junk;
    junk.fields.push_back({1, std::vector<uint8_t>{1, 2, 3}});
    Rng rng2(1);
    CHECK_THROWS_AS(CorruptTransaction(junk, Selector::Tag(1), p, rng2),
                    InvalidArgumentError);
  }
}

TEST_CASE("modem line corruption stays deliverable") {
  SUBCASE("dropping the event code") {
    Rng rng(1);
    std::string out = CorruptAtLine("+CREG:1,5", {AtSelector::Kind::kCode},
                                    Pattern::Of(PatternKind::kNullString), rng);
    CHECK(out == ":1,5");
    CHECK(std::holds_alternative<wire::AtError>(wire::DecodeAt(out)));
  }
  SUBCASE("corrupting one parameter") {
    Rng rng(2);
    AtSelector sel{AtSelector::Kind::kParam, 1};
    std::string out = CorruptAtLine("+CREG:1,5", sel,
                                    Pattern::Of(PatternKind::kNullString), rng);
    CHECK(out == "+CREG:1,");
  }
  SUBCASE("command rendering keeps the AT prefix") {
    Rng rng(3);
    std::string out = CorruptAtLine("AT+CFUN=1", {AtSelector::Kind::kCode},
                                    Pattern::Of(PatternKind::kTruncate), rng);
    CHECK(out == "AT+C=1");
  }
  SUBCASE("unparseable lines get a character substituted") {
    Rng rng(4);
    std::string out = CorruptAtLine("::::", {AtSelector::Kind::kAll},
                                    Pattern::Of(PatternKind::kNullString), rng);
    CHECK(out != "::::");
    CHECK(out.size() == 4);
  }
}

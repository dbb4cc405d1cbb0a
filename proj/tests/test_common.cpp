// Copyright 2026 The MSFQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "msfq/common.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

using namespace msfq;

TEST_CASE("fnv1a64 matches published test vectors", "[common]") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("fnv1a64 chaining equals one-shot hashing", "[common]") {
  const char* s = "hello, world";
  const uint64_t whole = fnv1a64(s, 12);
  const uint64_t part = fnv1a64(s + 5, 7, fnv1a64(s, 5));
  CHECK(whole == part);
}

TEST_CASE("rng streams are deterministic per seed", "[common]") {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  bool all_equal = true;
  bool any_differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_differs = any_differs || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_differs);
}

TEST_CASE("rng uniform stays in the half-open unit interval", "[common]") {
  Rng rng(7);
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  // With 1e4 draws the extremes should approach the interval ends.
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("rng uniform_int covers the full range", "[common]") {
  Rng rng(11);
  std::set<uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const uint64_t v = rng.uniform_int(6);
    REQUIRE(v < 6);
    seen.insert(v);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("rng gaussian has roughly standard moments", "[common]") {
  Rng rng(3);
  const int n = 50000;
  double sum = 0.0;
  double sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("rng derive yields independent child streams", "[common]") {
  Rng root(5);
  Rng c0 = root.derive(0);
  Rng c1 = root.derive(1);
  Rng c0_again = Rng(5).derive(0);
  CHECK(c0.next_u64() != c1.next_u64());
  Rng c0_ref = Rng(5).derive(0);
  CHECK(c0_ref.next_u64() == c0_again.next_u64());
  // Deriving does not advance the parent.
  Rng fresh(5);
  (void)fresh.derive(9);
  CHECK(fresh.next_u64() == Rng(5).next_u64());
}

TEST_CASE("error hierarchy supports catch by base", "[common]") {
  CHECK_THROWS_AS(throw BadMagicError("x"), IoError);
  CHECK_THROWS_AS(throw TruncatedPayloadError("x"), IoError);
  CHECK_THROWS_AS(throw VersionMismatchError("x"), IoError);
  CHECK_THROWS_AS(throw ConfigError("x"), Error);
  CHECK_THROWS_AS(throw MismatchError("x"), Error);
  CHECK_THROWS_AS(throw NumericError("x"), Error);
  CHECK_THROWS_AS(throw InsufficientDataError("x"), Error);
  CHECK_THROWS_AS(throw InvalidIndexError("x"), Error);
  CHECK_THROWS_AS(throw InvalidInputError("x"), Error);
}

TEST_CASE("feature kind codes round trip and reject junk", "[common]") {
  CHECK(feature_kind_from_code(0) == FeatureKind::kMel);
  CHECK(feature_kind_from_code(1) == FeatureKind::kUpstream);
  CHECK(feature_kind_from_code(2) == FeatureKind::kStage);
  CHECK(feature_kind_from_code(3) == FeatureKind::kEmbedding);
  CHECK_THROWS_AS(feature_kind_from_code(4), InvalidInputError);
  CHECK_THROWS_AS(feature_kind_from_code(255), InvalidInputError);
}

TEST_CASE("require_finite flags nan and inf", "[common]") {
  MatrixXd m = MatrixXd::Zero(2, 2);
  CHECK_NOTHROW(require_finite(m, "m"));
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(require_finite(m, "m"), InvalidInputError);
  m(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(require_finite(m, "m"), InvalidInputError);
}

TEST_CASE("feature sequence accessors", "[common]") {
  FeatureSequence s(MatrixXd::Zero(3, 5), 12.5, FeatureKind::kStage);
  CHECK(s.num_frames() == 3);
  CHECK(s.dim() == 5);
  CHECK_FALSE(s.empty());
  CHECK(FeatureSequence{}.empty());
}

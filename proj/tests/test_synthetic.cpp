#include <cstdio>
#include <set>

#include "comatch/synthetic.hpp"
#include "doctest.h"

using namespace comatch;

namespace {

SyntheticSpec small_spec(std::size_t n = 200, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.content_words = 12;
  spec.number_words = 6;
  spec.antonym_pairs = 4;
  spec.filler_words = 6;
  spec.min_len = 5;
  spec.max_len = 9;
  spec.num_examples = n;
  spec.seed = seed;
  return spec;
}

// Independent re-derivation of every label from the construction rules:
//   filler-only rewrite (<= 20% positions, filler->filler)  -> 1
//   otherwise                                               -> 0
// Also checks that the tag matches what the pair actually looks like.
bool label_consistent(const SyntheticSpec& spec, const PairExample& ex) {
  using Role = SyntheticSpec::Role;
  const auto& q = ex.tokens_q;
  const auto& p = ex.tokens_p;

  std::size_t expected = 0;
  if (q.size() == p.size()) {
    std::size_t diffs = 0;
    bool filler_only = true;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q[i] == p[i]) continue;
      ++diffs;
      if (spec.role_of(q[i]) != Role::Filler || spec.role_of(p[i]) != Role::Filler)
        filler_only = false;
    }
    if (filler_only && diffs <= q.size() / 5) expected = 1;
  }
  if (expected != ex.label) return false;

  if (ex.tag == "swap_num" || ex.tag == "swap_ant" || ex.tag == "overlap_high") {
    if (q.size() != p.size()) return false;
    std::size_t diffs = 0, diff_pos = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q[i] != p[i]) {
        ++diffs;
        diff_pos = i;
      }
    }
    if (diffs != 1) return false;
    const Role rq = spec.role_of(q[diff_pos]);
    const Role rp = spec.role_of(p[diff_pos]);
    if (ex.tag == "swap_num") return rq == Role::Number && rp == Role::Number;
    if (ex.tag == "overlap_high") return rq == Role::Content && rp == Role::Content;
    return rq == Role::Antonym && p[diff_pos] == spec.antonym_partner(q[diff_pos]);
  }
  return true;
}

}  // namespace

TEST_CASE("vocabulary layout and roles") {
  SyntheticSpec spec = small_spec();
  CHECK(spec.vocab_size() == 3 + 12 + 6 + 8 + 6);
  CHECK(spec.role_of(kClsToken) == SyntheticSpec::Role::Special);
  CHECK(spec.role_of(spec.content_begin()) == SyntheticSpec::Role::Content);
  CHECK(spec.role_of(spec.number_begin()) == SyntheticSpec::Role::Number);
  CHECK(spec.role_of(spec.antonym_begin()) == SyntheticSpec::Role::Antonym);
  CHECK(spec.role_of(spec.filler_begin()) == SyntheticSpec::Role::Filler);
  CHECK(spec.antonym_partner(spec.antonym_begin()) == spec.antonym_begin() + 1);
  CHECK(spec.antonym_partner(spec.antonym_begin() + 1) == spec.antonym_begin());
  CHECK(spec.token_name(spec.number_begin() + 2) == "n2");
  CHECK(spec.token_id("n2") == spec.number_begin() + 2);
  CHECK_THROWS_AS(spec.token_id("nope"), ValueError);
}

TEST_CASE("generation is deterministic under the seed") {
  SyntheticSpec spec = small_spec();
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens_q == b[i].tokens_q);
    CHECK(a[i].tokens_p == b[i].tokens_p);
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].tag == b[i].tag);
  }
  SyntheticSpec other = small_spec(200, 4);
  const auto c = generate(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].tokens_q != c[i].tokens_q) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("all-positive mix produces only label 1") {
  SyntheticSpec spec = small_spec(100);
  spec.positive_fraction = 1.0;
  for (const PairExample& ex : generate(spec)) {
    CHECK(ex.label == 1);
    CHECK(ex.tag == "none");
  }
}

TEST_CASE("swap negatives differ in exactly one position") {
  SyntheticSpec spec = small_spec(400);
  spec.positive_fraction = 0.0;
  std::set<std::string> seen;
  for (const PairExample& ex : generate(spec)) {
    seen.insert(ex.tag);
    if (ex.tag == "swap_num" || ex.tag == "swap_ant" || ex.tag == "overlap_high") {
      REQUIRE(ex.tokens_q.size() == ex.tokens_p.size());
      std::size_t diffs = 0;
      for (std::size_t i = 0; i < ex.tokens_q.size(); ++i)
        if (ex.tokens_q[i] != ex.tokens_p[i]) ++diffs;
      CHECK(diffs == 1);
    }
  }
  CHECK(seen.count("swap_num") == 1);
  CHECK(seen.count("swap_ant") == 1);
  CHECK(seen.count("overlap_high") == 1);
  CHECK(seen.count("none") == 1);  // random negatives
}

TEST_CASE("brute-force checker re-derives every label") {
  SyntheticSpec spec = small_spec(1000, 17);
  std::size_t mismatches = 0;
  for (const PairExample& ex : generate(spec))
    if (!label_consistent(spec, ex)) ++mismatches;
  CHECK(mismatches == 0);
}

TEST_CASE("positives share at least 80% of their tokens") {
  SyntheticSpec spec = small_spec(500, 23);
  for (const PairExample& ex : generate(spec)) {
    if (ex.label != 1) continue;
    REQUIRE(ex.tokens_q.size() == ex.tokens_p.size());
    std::size_t same = 0;
    for (std::size_t i = 0; i < ex.tokens_q.size(); ++i)
      if (ex.tokens_q[i] == ex.tokens_p[i]) ++same;
    CHECK(5 * same >= 4 * ex.tokens_q.size());
  }
}

TEST_CASE("undersized vocab roles are a configuration error") {
  SyntheticSpec spec = small_spec();
  spec.number_words = 1;
  CHECK_THROWS_AS(generate(spec), ValueError);
  spec = small_spec();
  spec.antonym_pairs = 0;
  CHECK_THROWS_AS(generate(spec), ValueError);
  spec = small_spec();
  spec.min_len = 3;
  CHECK_THROWS_AS(generate(spec), ValueError);
}

TEST_CASE("jsonl round trip") {
  SyntheticSpec spec = small_spec(50);
  const auto data = generate(spec);
  const std::string path = "test_dataset_tmp.jsonl";
  write_jsonl(path, data);
  const auto loaded = read_jsonl(path);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].tokens_q == data[i].tokens_q);
    CHECK(loaded[i].tokens_p == data[i].tokens_p);
    CHECK(loaded[i].label == data[i].label);
    CHECK(loaded[i].tag == data[i].tag);
  }
  std::remove(path.c_str());
}

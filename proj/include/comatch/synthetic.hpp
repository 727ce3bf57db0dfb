#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comatch/matcher.hpp"
#include "comatch/rng.hpp"

namespace comatch {

// Synthetic sentence-pair task built around fine-grained differences. The
// vocabulary is partitioned into roles: content words carry topic identity,
// number and antonym tokens flip the label when swapped, filler words are
// semantically inert. Positives rewrite fillers only; negatives swap exactly
// one critical token (or pair with an unrelated sentence).
struct SyntheticSpec {
  std::size_t content_words = 40;
  std::size_t number_words = 16;
  std::size_t antonym_pairs = 10;
  std::size_t filler_words = 16;
  std::size_t min_len = 6;
  std::size_t max_len = 10;
  double positive_fraction = 0.5;
  double w_swap_num = 0.25;
  double w_swap_ant = 0.25;
  double w_overlap_high = 0.25;
  double w_random_neg = 0.25;
  std::size_t num_examples = 1000;
  std::uint64_t seed = 1;

  enum class Role { Special, Content, Number, Antonym, Filler };

  void validate() const;
  std::size_t vocab_size() const;
  std::size_t content_begin() const { return kNumSpecialTokens; }
  std::size_t number_begin() const { return content_begin() + content_words; }
  std::size_t antonym_begin() const { return number_begin() + number_words; }
  std::size_t filler_begin() const { return antonym_begin() + 2 * antonym_pairs; }
  Role role_of(std::size_t id) const;
  // The other member of an antonym pair.
  std::size_t antonym_partner(std::size_t id) const;
  std::string token_name(std::size_t id) const;
  // Inverse of token_name; throws ValueError for unknown spellings.
  std::size_t token_id(const std::string& name) const;
};

// Deterministic under spec.seed; every example draws from its own forked
// stream, so generation order never matters.
std::vector<PairExample> generate(const SyntheticSpec& spec);

// True when p can be read as a filler-only rewrite of q (the positive rule):
// same length, every difference replaces a filler with a filler, and at most
// floor(len/5) positions differ.
bool filler_rewrite(const SyntheticSpec& spec, const std::vector<std::size_t>& q,
                    const std::vector<std::size_t>& p);

void write_jsonl(const std::string& path, const std::vector<PairExample>& examples);
// Token arrays may hold ids or token-name strings; names need a spec to
// resolve against.
std::vector<PairExample> read_jsonl(const std::string& path,
                                    const SyntheticSpec* vocab = nullptr);

}  // namespace comatch

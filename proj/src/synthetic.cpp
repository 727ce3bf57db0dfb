#include "comatch/synthetic.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace comatch {

namespace {

using json = nlohmann::json;

// Position roles of one sentence template.
struct Template {
  std::size_t number_pos = 0;
  std::size_t antonym_pos = 0;
  std::vector<std::size_t> filler_pos;
  std::vector<std::size_t> content_pos;
};

struct Sentence {
  std::vector<std::size_t> tokens;
  Template tpl;
};

std::size_t different_id(Rng& rng, std::size_t current, std::size_t begin, std::size_t count) {
  // uniform over the block minus the current id
  const std::size_t offset = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(count) - 1));
  return begin + (current - begin + offset) % count;
}

Sentence make_sentence(const SyntheticSpec& spec, Rng& rng) {
  Sentence s;
  const std::size_t len = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(spec.min_len), static_cast<std::int64_t>(spec.max_len)));
  std::vector<std::size_t> order(len);
  for (std::size_t i = 0; i < len; ++i) order[i] = i;
  for (std::size_t i = len - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }

  const std::size_t n_filler = std::max<std::size_t>(1, len / 4);
  s.tpl.number_pos = order[0];
  s.tpl.antonym_pos = order[1];
  for (std::size_t i = 0; i < n_filler; ++i) s.tpl.filler_pos.push_back(order[2 + i]);
  for (std::size_t i = 2 + n_filler; i < len; ++i) s.tpl.content_pos.push_back(order[i]);

  s.tokens.assign(len, 0);
  s.tokens[s.tpl.number_pos] =
      spec.number_begin() + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.number_words) - 1));
  const std::size_t pair = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.antonym_pairs) - 1));
  const std::size_t side = static_cast<std::size_t>(rng.uniform_int(0, 1));
  s.tokens[s.tpl.antonym_pos] = spec.antonym_begin() + 2 * pair + side;
  for (std::size_t pos : s.tpl.filler_pos) {
    s.tokens[pos] =
        spec.filler_begin() + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.filler_words) - 1));
  }
  for (std::size_t pos : s.tpl.content_pos) {
    s.tokens[pos] =
        spec.content_begin() + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.content_words) - 1));
  }
  return s;
}

enum class NegKind { SwapNum, SwapAnt, OverlapHigh, RandomNeg };

NegKind pick_negative(const SyntheticSpec& spec, Rng& rng) {
  const double total = spec.w_swap_num + spec.w_swap_ant + spec.w_overlap_high + spec.w_random_neg;
  const double r = rng.uniform(0.0, total);
  if (r < spec.w_swap_num) return NegKind::SwapNum;
  if (r < spec.w_swap_num + spec.w_swap_ant) return NegKind::SwapAnt;
  if (r < spec.w_swap_num + spec.w_swap_ant + spec.w_overlap_high) return NegKind::OverlapHigh;
  return NegKind::RandomNeg;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (content_words < 2 || number_words < 2 || antonym_pairs < 1 || filler_words < 2) {
    throw ValueError(
        "synthetic: vocab roles too small (need content>=2, numbers>=2, antonym_pairs>=1, "
        "fillers>=2)");
  }
  if (min_len < 4) throw ValueError("synthetic: min_len must be at least 4");
  if (max_len < min_len) throw ValueError("synthetic: max_len < min_len");
  if (positive_fraction < 0.0 || positive_fraction > 1.0) {
    throw ValueError("synthetic: positive_fraction must lie in [0,1]");
  }
  if (w_swap_num < 0 || w_swap_ant < 0 || w_overlap_high < 0 || w_random_neg < 0) {
    throw ValueError("synthetic: negative-mix weights must be nonnegative");
  }
  if (positive_fraction < 1.0 &&
      w_swap_num + w_swap_ant + w_overlap_high + w_random_neg <= 0.0) {
    throw ValueError("synthetic: negative-mix weights sum to zero but negatives are requested");
  }
  if (num_examples == 0) throw ValueError("synthetic: num_examples must be positive");
}

std::size_t SyntheticSpec::vocab_size() const {
  return kNumSpecialTokens + content_words + number_words + 2 * antonym_pairs + filler_words;
}

SyntheticSpec::Role SyntheticSpec::role_of(std::size_t id) const {
  if (id < content_begin()) return Role::Special;
  if (id < number_begin()) return Role::Content;
  if (id < antonym_begin()) return Role::Number;
  if (id < filler_begin()) return Role::Antonym;
  if (id < vocab_size()) return Role::Filler;
  throw ValueError("synthetic: id " + std::to_string(id) + " outside the vocabulary");
}

std::size_t SyntheticSpec::antonym_partner(std::size_t id) const {
  if (role_of(id) != Role::Antonym) {
    throw ValueError("synthetic: id " + std::to_string(id) + " is not an antonym token");
  }
  const std::size_t off = id - antonym_begin();
  return antonym_begin() + (off ^ 1u);
}

std::string SyntheticSpec::token_name(std::size_t id) const {
  switch (role_of(id)) {
    case Role::Special:
      return id == kPadToken ? "[pad]" : (id == kClsToken ? "[cls]" : "[sep]");
    case Role::Content:
      return "w" + std::to_string(id - content_begin());
    case Role::Number:
      return "n" + std::to_string(id - number_begin());
    case Role::Antonym: {
      const std::size_t off = id - antonym_begin();
      return "a" + std::to_string(off / 2) + (off % 2 == 0 ? "+" : "-");
    }
    case Role::Filler:
      return "f" + std::to_string(id - filler_begin());
  }
  return "?";
}

std::size_t SyntheticSpec::token_id(const std::string& name) const {
  for (std::size_t id = 0; id < vocab_size(); ++id) {
    if (token_name(id) == name) return id;
  }
  throw ValueError("synthetic: unknown token '" + name + "'");
}

bool filler_rewrite(const SyntheticSpec& spec, const std::vector<std::size_t>& q,
                    const std::vector<std::size_t>& p) {
  if (q.size() != p.size()) return false;
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == p[i]) continue;
    if (spec.role_of(q[i]) != SyntheticSpec::Role::Filler ||
        spec.role_of(p[i]) != SyntheticSpec::Role::Filler) {
      return false;
    }
    ++diffs;
  }
  return diffs <= q.size() / 5;
}

std::vector<PairExample> generate(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  std::vector<PairExample> out;
  out.reserve(spec.num_examples);

  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    Rng rng = root.fork(i);
    Sentence q = make_sentence(spec, rng);
    PairExample ex;
    ex.tokens_q = q.tokens;

    if (rng.uniform(0.0, 1.0) < spec.positive_fraction) {
      // Filler-only rewrite; at most 20% of the positions change.
      ex.tokens_p = q.tokens;
      const std::size_t budget = std::min(q.tpl.filler_pos.size(), q.tokens.size() / 5);
      const std::size_t k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(budget)));
      std::vector<std::size_t> slots = q.tpl.filler_pos;
      for (std::size_t s = 0; s + 1 < slots.size(); ++s) {
        const std::size_t j =
            s + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slots.size() - s) - 1));
        std::swap(slots[s], slots[j]);
      }
      for (std::size_t s = 0; s < k; ++s) {
        ex.tokens_p[slots[s]] =
            different_id(rng, ex.tokens_p[slots[s]], spec.filler_begin(), spec.filler_words);
      }
      ex.label = 1;
      ex.tag = "none";
    } else {
      switch (pick_negative(spec, rng)) {
        case NegKind::SwapNum:
          ex.tokens_p = q.tokens;
          ex.tokens_p[q.tpl.number_pos] = different_id(rng, q.tokens[q.tpl.number_pos],
                                                       spec.number_begin(), spec.number_words);
          ex.tag = "swap_num";
          break;
        case NegKind::SwapAnt:
          ex.tokens_p = q.tokens;
          ex.tokens_p[q.tpl.antonym_pos] = spec.antonym_partner(q.tokens[q.tpl.antonym_pos]);
          ex.tag = "swap_ant";
          break;
        case NegKind::OverlapHigh: {
          ex.tokens_p = q.tokens;
          const auto& slots = q.tpl.content_pos;
          const std::size_t pos =
              slots[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(slots.size()) - 1))];
          ex.tokens_p[pos] =
              different_id(rng, q.tokens[pos], spec.content_begin(), spec.content_words);
          ex.tag = "overlap_high";
          break;
        }
        case NegKind::RandomNeg: {
          // An unrelated sentence; reject the (rare) draw that happens to
          // read as a filler rewrite of q, which would contradict the label.
          Sentence p = make_sentence(spec, rng);
          while (filler_rewrite(spec, q.tokens, p.tokens)) p = make_sentence(spec, rng);
          ex.tokens_p = p.tokens;
          ex.tag = "none";
          break;
        }
      }
      ex.label = 0;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<PairExample>& examples) {
  std::ofstream f(path);
  if (!f) throw ValueError("cannot open '" + path + "' for writing");
  for (const PairExample& ex : examples) {
    json row;
    row["q"] = ex.tokens_q;
    row["p"] = ex.tokens_p;
    row["label"] = ex.label;
    row["tag"] = ex.tag;
    f << row.dump() << "\n";
  }
}

std::vector<PairExample> read_jsonl(const std::string& path, const SyntheticSpec* vocab) {
  std::ifstream f(path);
  if (!f) throw ValueError("cannot open dataset '" + path + "'");
  std::vector<PairExample> out;
  std::string line;
  std::size_t lineno = 0;
  auto parse_tokens = [&](const json& arr) {
    std::vector<std::size_t> toks;
    for (const auto& v : arr) {
      if (v.is_number_unsigned() || v.is_number_integer()) {
        toks.push_back(v.get<std::size_t>());
      } else if (v.is_string()) {
        if (vocab == nullptr) {
          throw ValueError(path + ": string tokens need a vocabulary to resolve against");
        }
        toks.push_back(vocab->token_id(v.get<std::string>()));
      } else {
        throw ValueError(path + ": tokens must be ids or strings");
      }
    }
    return toks;
  };
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValueError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (!row.contains("q") || !row.contains("p") || !row.contains("label")) {
      throw ValueError(path + ":" + std::to_string(lineno) + ": need q, p and label fields");
    }
    PairExample ex;
    ex.tokens_q = parse_tokens(row["q"]);
    ex.tokens_p = parse_tokens(row["p"]);
    ex.label = row["label"].get<std::size_t>();
    ex.tag = row.value("tag", std::string("none"));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace comatch

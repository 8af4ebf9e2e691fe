#include "xfer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "xfer/error.hpp"
#include "xfer/tensor.hpp"

namespace xfer {

namespace {

// Reverses each consecutive run of k tokens; an involution.
Sentence swap_blocks(Sentence s, int k) {
  if (k <= 1) return s;
  for (std::size_t i = 0; i < s.size(); i += k)
    std::reverse(s.begin() + i, s.begin() + std::min(s.size(), i + k));
  return s;
}

}  // namespace

PermutedCorpus permute_vocabulary(const TokenizedCorpus& corpus, std::uint64_t seed) {
  std::set<std::string> types;
  for (const auto& s : corpus) types.insert(s.begin(), s.end());
  std::vector<std::string> from(types.begin(), types.end());
  std::vector<std::string> to = from;
  Rng rng(seed);
  std::shuffle(to.begin(), to.end(), rng);
  PermutedCorpus out;
  for (std::size_t i = 0; i < from.size(); ++i) out.mapping[from[i]] = to[i];
  out.corpus = apply_bijection(corpus, out.mapping);
  return out;
}

TokenizedCorpus apply_bijection(const TokenizedCorpus& corpus, const Bijection& mapping) {
  TokenizedCorpus out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Sentence s;
    s.reserve(corpus[i].size());
    for (const auto& w : corpus[i]) {
      auto it = mapping.find(w);
      if (it == mapping.end())
        throw DataError("apply_bijection: line " + std::to_string(i + 1) + ": type '" + w +
                        "' has no image");
      s.push_back(it->second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Bijection invert_bijection(const Bijection& mapping) {
  Bijection out;
  for (const auto& [a, b] : mapping)
    if (!out.emplace(b, a).second)
      throw DataError("invert_bijection: '" + b + "' has two preimages");
  return out;
}

Bitext make_copy_corpus(const TokenizedCorpus& mono) { return {mono, mono}; }

Bitext make_perm_corpus(const TokenizedCorpus& mono, std::uint64_t seed) {
  Rng rng(seed);
  Bitext out;
  out.target = mono;
  out.source.reserve(mono.size());
  for (const auto& s : mono) {
    Sentence p = s;
    std::shuffle(p.begin(), p.end(), rng);
    out.source.push_back(std::move(p));
  }
  return out;
}

void ToyGrammar::validate() const {
  if (tgt_vocab < 2 || src_vocab < 2) throw DataError("toy grammar: vocabulary sizes must be >= 2");
  if (min_len < 1 || max_len < min_len) throw DataError("toy grammar: need 1 <= min_len <= max_len");
  if (branching < 1) throw DataError("toy grammar: branching must be >= 1");
  if (swap_block < 1) throw DataError("toy grammar: swap_block must be >= 1");
  if (source_prefix == target_prefix)
    throw DataError("toy grammar: source and target prefixes must differ");
}

ToyLanguage::ToyLanguage(ToyGrammar grammar) : grammar_(std::move(grammar)) {
  grammar_.validate();
  const int v = grammar_.tgt_vocab;
  for (int i = 0; i < v; ++i) {
    target_types_.push_back(grammar_.target_prefix + std::to_string(i));
    target_index_[target_types_.back()] = i;
  }

  Rng g(grammar_.grammar_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int branch = std::min(grammar_.branching, v);
  transitions_.assign(v + 1, std::vector<double>(v, 0.0));
  std::vector<int> ids(v);
  for (auto& row : transitions_) {
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), g);
    double z = 0;
    for (int k = 0; k < branch; ++k) {
      row[ids[k]] = std::exp(normal(g));
      z += row[ids[k]];
    }
    for (auto& p : row) p /= z;
  }

  Rng l(grammar_.lexicon_seed);
  std::vector<int> src_ids(grammar_.src_vocab);
  std::iota(src_ids.begin(), src_ids.end(), 0);
  std::shuffle(src_ids.begin(), src_ids.end(), l);
  for (int i = 0; i < v; ++i) {
    const auto s = grammar_.source_prefix + std::to_string(src_ids[i % grammar_.src_vocab]);
    dictionary_[target_types_[i]] = s;
    inverse_[s].push_back(i);
  }
}

Bitext ToyLanguage::generate(std::uint64_t seed, std::size_t count) const {
  Rng rng(seed);
  std::uniform_int_distribution<int> length(grammar_.min_len, grammar_.max_len);
  Bitext out;
  for (std::size_t n = 0; n < count; ++n) {
    const int len = length(rng);
    Sentence t;
    int prev = 0;
    for (int k = 0; k < len; ++k) {
      const auto& row = transitions_[prev];
      std::discrete_distribution<int> next(row.begin(), row.end());
      const int w = next(rng);
      t.push_back(target_types_[w]);
      prev = w + 1;
    }
    out.source.push_back(to_source(t));
    out.target.push_back(std::move(t));
  }
  return out;
}

Sentence ToyLanguage::to_source(const Sentence& target) const {
  Sentence s;
  s.reserve(target.size());
  for (const auto& w : target) {
    auto it = dictionary_.find(w);
    if (it == dictionary_.end()) throw DataError("toy language: unknown target type '" + w + "'");
    s.push_back(it->second);
  }
  return swap_blocks(std::move(s), grammar_.swap_block);
}

Sentence ToyLanguage::translate(const Sentence& source) const {
  const Sentence s = swap_blocks(source, grammar_.swap_block);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  // Viterbi over the candidate readings of each source token under the true
  // bigram process. An unknown token passes through and restarts the chain.
  struct Cell {
    double score;
    int back;
  };
  std::vector<std::vector<int>> cands(s.size());
  std::vector<std::vector<Cell>> table(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    auto it = inverse_.find(s[k]);
    if (it != inverse_.end()) cands[k] = it->second;
    const bool known = !cands[k].empty();
    const std::size_t n = known ? cands[k].size() : 1;
    table[k].assign(n, {neg_inf, -1});
    for (std::size_t j = 0; j < n; ++j) {
      if (k == 0 || cands[k - 1].empty()) {
        const double base = k == 0 ? 0.0 : table[k - 1][0].score;
        table[k][j] = {base + (known ? std::log(transitions_[0][cands[k][j]]) : 0.0), 0};
        continue;
      }
      for (std::size_t i = 0; i < cands[k - 1].size(); ++i) {
        const double sc =
            table[k - 1][i].score +
            (known ? std::log(transitions_[cands[k - 1][i] + 1][cands[k][j]]) : 0.0);
        if (sc > table[k][j].score || table[k][j].back < 0) table[k][j] = {sc, int(i)};
      }
    }
  }
  Sentence t(s.size());
  if (s.empty()) return t;
  std::size_t j = 0;
  for (std::size_t i = 1; i < table.back().size(); ++i)
    if (table.back()[i].score > table.back()[j].score) j = i;
  for (std::size_t k = s.size(); k-- > 0;) {
    t[k] = cands[k].empty() ? s[k] : target_types_[cands[k][j]];
    j = static_cast<std::size_t>(std::max(table[k][j].back, 0));
  }
  return t;
}

double ToyLanguage::target_logprob(const Sentence& target) const {
  const int n = static_cast<int>(target.size());
  if (n < grammar_.min_len || n > grammar_.max_len)
    return -std::numeric_limits<double>::infinity();
  double lp = 0;
  int prev = 0;
  // Length is drawn up front; P(stop after t tokens | reached t) follows from
  // the uniform length distribution.
  for (int t = 0; t <= n; ++t) {
    if (t >= grammar_.min_len) {
      const double remaining = grammar_.max_len - t + 1;
      const double stop = 1.0 / remaining;
      lp += std::log(t == n ? stop : 1.0 - stop);
    }
    if (t == n) break;
    auto it = target_index_.find(target[t]);
    if (it == target_index_.end()) return -std::numeric_limits<double>::infinity();
    lp += std::log(transitions_[prev][it->second]);
    prev = it->second + 1;
  }
  return lp;
}

Bitext gen_toy_bitext(const ToyGrammar& grammar, std::uint64_t seed, std::size_t count) {
  return ToyLanguage(grammar).generate(seed, count);
}

}  // namespace xfer

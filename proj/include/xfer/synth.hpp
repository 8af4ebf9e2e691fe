#pragma once

// Seeded generators for synthetic-language experiments.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xfer/corpus.hpp"

namespace xfer {

using Bijection = std::map<std::string, std::string>;

struct PermutedCorpus {
  TokenizedCorpus corpus;
  Bijection mapping;  // original type -> replacement type
};

/// One uniform random bijection over the corpus's type set, applied to every token.
PermutedCorpus permute_vocabulary(const TokenizedCorpus& corpus, std::uint64_t seed);

/// Replaces every token by its image; throws DataError for unmapped tokens.
TokenizedCorpus apply_bijection(const TokenizedCorpus& corpus, const Bijection& mapping);
Bijection invert_bijection(const Bijection& mapping);

/// (s, s) for every line.
Bitext make_copy_corpus(const TokenizedCorpus& mono);

/// (seeded shuffle of s, s) for every line.
Bitext make_perm_corpus(const TokenizedCorpus& mono, std::uint64_t seed);

/// A toy language pair. Target sentences come from a bigram process over
/// `tgt_vocab` types (each type allows `branching` successors) with lengths
/// uniform in [min_len, max_len]. The source is the word-by-word image under a
/// fixed dictionary, with every consecutive run of `swap_block` tokens
/// reversed. With src_vocab < tgt_vocab the dictionary is many-to-one, so some
/// source words are ambiguous and only target context resolves them.
/// Languages sharing `grammar_seed` share the target side.
struct ToyGrammar {
  int src_vocab = 30;
  int tgt_vocab = 30;
  int min_len = 4;
  int max_len = 10;
  int branching = 5;
  int swap_block = 2;
  std::uint64_t grammar_seed = 7;
  std::uint64_t lexicon_seed = 11;
  std::string source_prefix = "s";
  std::string target_prefix = "e";

  void validate() const;
};

class ToyLanguage {
 public:
  explicit ToyLanguage(ToyGrammar grammar);

  const ToyGrammar& grammar() const { return grammar_; }

  Bitext generate(std::uint64_t seed, std::size_t count) const;

  /// Source sentence for a target sentence.
  Sentence to_source(const Sentence& target) const;
  /// Rule-based inverse of to_source: undo the reordering, then pick the
  /// most probable reading of ambiguous words under the true bigram process.
  /// Unknown source types pass through.
  Sentence translate(const Sentence& source) const;

  /// Exact log-probability of a target sentence and its end under the
  /// generating process (length hazard included).
  double target_logprob(const Sentence& target) const;

  /// Target type -> source type.
  const std::map<std::string, std::string>& dictionary() const { return dictionary_; }

 private:
  ToyGrammar grammar_;
  std::vector<std::string> target_types_;
  std::map<std::string, int> target_index_;
  // Row 0 is the sentence start, row i + 1 follows target type i.
  std::vector<std::vector<double>> transitions_;
  std::map<std::string, std::string> dictionary_;
  std::map<std::string, std::vector<int>> inverse_;  // source type -> target ids
};

/// Throws DataError for a degenerate grammar (vocabulary below 2).
Bitext gen_toy_bitext(const ToyGrammar& grammar, std::uint64_t seed, std::size_t count);

}  // namespace xfer

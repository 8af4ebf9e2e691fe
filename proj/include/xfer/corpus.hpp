#pragma once

// Corpus format: UTF-8 text, one whitespace-tokenized sentence per line;
// parallel files are aligned by line number.

#include <filesystem>
#include <string>
#include <vector>

#include "xfer/vocab.hpp"

namespace xfer {

using Sentence = std::vector<std::string>;
using TokenizedCorpus = std::vector<Sentence>;

struct SentencePair {
  std::vector<int> source;
  std::vector<int> target;
};

using ParallelCorpus = std::vector<SentencePair>;

struct Bitext {
  TokenizedCorpus source;
  TokenizedCorpus target;
};

TokenizedCorpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const TokenizedCorpus& corpus);

Bitext read_bitext(const std::filesystem::path& source, const std::filesystem::path& target);
void write_bitext(const std::filesystem::path& source, const std::filesystem::path& target,
                  const Bitext& bitext);

/// Maps tokens to ids, substituting <unk> for unknown types. Empty sentences
/// are rejected with their 1-based line number.
ParallelCorpus encode_bitext(const Bitext& bitext, const Vocabulary& source_vocab,
                             const Vocabulary& target_vocab);

std::vector<std::vector<int>> encode_corpus(const TokenizedCorpus& corpus,
                                            const Vocabulary& vocab);

std::size_t target_token_count(const ParallelCorpus& corpus);  // counts </s>

}  // namespace xfer

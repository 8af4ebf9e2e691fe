#include "xfer/corpus.hpp"

#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

TokenizedCorpus read_corpus(const std::filesystem::path& path) {
  TokenizedCorpus out;
  for (const auto& line : read_lines(path)) out.push_back(split_whitespace(line));
  return out;
}

void write_corpus(const std::filesystem::path& path, const TokenizedCorpus& corpus) {
  std::string text;
  for (const auto& s : corpus) text += join(s) + "\n";
  write_file_atomic(path, text);
}

Bitext read_bitext(const std::filesystem::path& source, const std::filesystem::path& target) {
  Bitext b{read_corpus(source), read_corpus(target)};
  if (b.source.size() != b.target.size())
    throw DataError("parallel files " + source.string() + " and " + target.string() +
                    " differ in line count (" + std::to_string(b.source.size()) + " vs " +
                    std::to_string(b.target.size()) + ")");
  return b;
}

void write_bitext(const std::filesystem::path& source, const std::filesystem::path& target,
                  const Bitext& bitext) {
  write_corpus(source, bitext.source);
  write_corpus(target, bitext.target);
}

ParallelCorpus encode_bitext(const Bitext& bitext, const Vocabulary& source_vocab,
                             const Vocabulary& target_vocab) {
  if (bitext.source.size() != bitext.target.size())
    throw DataError("bitext sides differ in sentence count");
  ParallelCorpus out;
  out.reserve(bitext.source.size());
  for (std::size_t i = 0; i < bitext.source.size(); ++i) {
    if (bitext.source[i].empty() || bitext.target[i].empty())
      throw DataError("line " + std::to_string(i + 1) + ": empty sentence");
    out.push_back({source_vocab.encode(bitext.source[i]), target_vocab.encode(bitext.target[i])});
  }
  return out;
}

std::vector<std::vector<int>> encode_corpus(const TokenizedCorpus& corpus,
                                            const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) throw DataError("line " + std::to_string(i + 1) + ": empty sentence");
    out.push_back(vocab.encode(corpus[i]));
  }
  return out;
}

std::size_t target_token_count(const ParallelCorpus& corpus) {
  std::size_t n = 0;
  for (const auto& p : corpus) n += p.target.size() + 1;
  return n;
}

}  // namespace xfer

#pragma once

// N-best lists in the format
//   sentence_id ||| token sequence ||| name=value name=value ... ||| total
// one entry per line. The trailing total becomes the feature "external".

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xfer/lm.hpp"
#include "xfer/seq2seq.hpp"

namespace xfer {

inline constexpr const char* kExternalFeature = "external";

struct NBestEntry {
  std::vector<std::string> tokens;
  std::map<std::string, double> features;
  double total = 0;
  int origin_rank = 0;  // 1-based position within its sentence in the input file
};

struct NBestSentence {
  int id = 0;
  std::vector<NBestEntry> entries;
};

struct NBestList {
  std::vector<NBestSentence> sentences;  // ascending id

  static NBestList parse(const std::string& text, const std::string& origin = "<memory>");
  static NBestList load(const std::filesystem::path& path);
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;
};

using Weights = std::map<std::string, double>;

/// Adds (or overwrites) `name` on every entry: log P(hypothesis, </s> | source)
/// divided by the hypothesis length plus one. `sources[id]` is the source
/// sentence of n-best sentence `id`.
void add_feature(NBestList& nbest, const std::vector<std::vector<std::string>>& sources,
                 const Seq2Seq<float>& model, const std::string& name);

/// Same for a language model, which ignores the source.
void add_feature(NBestList& nbest, const LanguageModel<float>& lm, const std::string& name);

/// All weight vectors over `dims` features with non-negative multiples of
/// `step` summing to one.
std::vector<std::vector<double>> simplex_grid(std::size_t dims, double step = 0.1);

/// Highest-scoring entry per sentence; ties keep the lower origin rank.
/// Throws DataError naming a feature an entry lacks.
std::vector<const NBestEntry*> rerank(const NBestList& nbest, const Weights& weights);

struct TuneResult {
  Weights weights;
  double bleu = 0;
};

/// Exhaustive search over `grid` (one weight per feature name) for the
/// reranked corpus BLEU against `references`. Ties go to the larger weight on
/// the external feature, then to the earlier grid point.
TuneResult tune_weights(const NBestList& nbest,
                        const std::vector<std::vector<std::string>>& references,
                        const std::vector<std::string>& feature_names,
                        const std::vector<std::vector<double>>& grid);

Weights parse_weights(const std::string& text, const std::string& origin = "<memory>");
Weights load_weights(const std::filesystem::path& path);
std::string weights_to_string(const Weights& weights);
void save_weights(const std::filesystem::path& path, const Weights& weights);

}  // namespace xfer

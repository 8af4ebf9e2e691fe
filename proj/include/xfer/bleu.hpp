#pragma once

// Case-insensitive, single-reference corpus BLEU-4 without smoothing.

#include <array>
#include <string>
#include <vector>

namespace xfer {

struct BleuStats {
  std::array<long, 4> matches{};  // clipped n-gram matches
  std::array<long, 4> totals{};   // hypothesis n-gram counts
  long hyp_len = 0;
  long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
  /// Score in [0, 100]. Orders with no hypothesis n-grams at all are left out
  /// of the geometric mean; any other zero precision gives 0.
  double score() const;
  double brevity_penalty() const;
  double precision(int n) const;  // n in 1..4; 0 when there are no n-grams
};

/// Statistics for one pair, tokens already split. Case-folds both sides.
BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

/// Throws DataError when the corpora have different line counts.
BleuStats corpus_stats(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs);

double bleu(const std::vector<std::vector<std::string>>& hyps,
            const std::vector<std::vector<std::string>>& refs);

}  // namespace xfer

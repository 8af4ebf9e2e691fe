#include "xfer/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> count_ngrams(const std::vector<std::string>& toks, int n) {
  std::map<Ngram, long> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[Ngram(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

std::vector<std::string> fold(const std::vector<std::string>& toks) {
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(lowercase(t));
  return out;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int i = 0; i < 4; ++i) {
    matches[i] += o.matches[i];
    totals[i] += o.totals[i];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

double BleuStats::precision(int n) const {
  if (n < 1 || n > 4) throw UsageError("bleu: n-gram order must lie in 1..4");
  const auto t = totals[n - 1];
  return t == 0 ? 0.0 : static_cast<double>(matches[n - 1]) / static_cast<double>(t);
}

double BleuStats::brevity_penalty() const {
  if (hyp_len == 0) return 0.0;
  return std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
}

double BleuStats::score() const {
  if (hyp_len == 0) return 0.0;
  double log_sum = 0;
  int orders = 0;
  for (int n = 1; n <= 4; ++n) {
    if (totals[n - 1] == 0) continue;
    if (matches[n - 1] == 0) return 0.0;
    log_sum += std::log(precision(n));
    ++orders;
  }
  return 100.0 * brevity_penalty() * std::exp(log_sum / orders);
}

BleuStats sentence_stats(const std::vector<std::string>& hyp_raw,
                         const std::vector<std::string>& ref_raw) {
  const auto hyp = fold(hyp_raw);
  const auto ref = fold(ref_raw);
  BleuStats s;
  s.hyp_len = static_cast<long>(hyp.size());
  s.ref_len = static_cast<long>(ref.size());
  for (int n = 1; n <= 4; ++n) {
    const auto h = count_ngrams(hyp, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [g, c] : h) {
      s.totals[n - 1] += c;
      if (auto it = r.find(g); it != r.end()) s.matches[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

BleuStats corpus_stats(const std::vector<std::vector<std::string>>& hyps,
                       const std::vector<std::vector<std::string>>& refs) {
  if (hyps.size() != refs.size())
    throw DataError("bleu: " + std::to_string(hyps.size()) + " hypotheses but " +
                    std::to_string(refs.size()) + " references");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_stats(hyps[i], refs[i]);
  return total;
}

double bleu(const std::vector<std::vector<std::string>>& hyps,
            const std::vector<std::vector<std::string>>& refs) {
  return corpus_stats(hyps, refs).score();
}

}  // namespace xfer

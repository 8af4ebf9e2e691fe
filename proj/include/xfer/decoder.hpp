#pragma once

// Beam search over one model or an ensemble, plus attention-driven
// replacement of emitted <unk> tokens.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xfer/seq2seq.hpp"
#include "xfer/transfer.hpp"

namespace xfer {

struct Hypothesis {
  std::vector<int> tokens;    // emitted ids, </s> excluded
  double logprob = 0;         // includes log P(</s>) when finished
  std::vector<int> attention; // argmax source position for each entry of `tokens`
  bool finished = false;      // ended with </s> rather than at max_len

  /// Emitted tokens, counting </s> when present.
  std::size_t length() const { return tokens.size() + (finished ? 1 : 0); }
  double score() const { return length() == 0 ? logprob : logprob / double(length()); }
};

enum class EnsembleMode {
  Probability,  // arithmetic mean of member distributions
  LogSpace,     // renormalised mean of member log-distributions
};

/// Non-owning view over k >= 1 models sharing one target vocabulary.
template <typename T>
class Ensemble {
 public:
  struct State {
    std::shared_ptr<const std::vector<EncoderOutput<T>>> encoded;
    std::vector<DecoderState<T>> members;
  };
  struct Step {
    std::vector<double> logprobs;  // |V_tgt|
    std::vector<double> attention; // averaged over members, one per source position
    State state;
  };

  explicit Ensemble(std::vector<const Seq2Seq<T>*> models,
                    EnsembleMode mode = EnsembleMode::Probability);

  std::size_t size() const { return models_.size(); }
  const Vocabulary& target_vocab() const { return models_.front()->target_vocab(); }
  const Vocabulary& source_vocab() const { return models_.front()->source_vocab(); }

  State start(std::span<const int> source) const;
  Step step(int prev_id, const State& state) const;

  /// log P(target, </s> | source) under the ensemble distribution.
  double sequence_logprob(std::span<const int> source, std::span<const int> target) const;

 private:
  std::vector<const Seq2Seq<T>*> models_;
  EnsembleMode mode_;
};

struct BeamOptions {
  int beam = 5;
  int max_len = 50;  // emitted tokens per hypothesis, </s> included
};

/// Returns every completed hypothesis, best length-normalised score first.
/// <pad> and <s> are never emitted.
template <typename T>
std::vector<Hypothesis> beam_search(const Ensemble<T>& ensemble, std::span<const int> source,
                                    const BeamOptions& options);

template <typename T>
std::vector<Hypothesis> beam_search(const Seq2Seq<T>& model, std::span<const int> source,
                                    const BeamOptions& options) {
  return beam_search(Ensemble<T>({&model}), source, options);
}

/// Surface tokens for the hypothesis; each <unk> takes the dictionary's best
/// translation of the most attended source token, or that token itself.
std::vector<std::string> unk_replace(const Hypothesis& hyp, const Vocabulary& target_vocab,
                                     const std::vector<std::string>& source_tokens,
                                     const TTable* dictionary = nullptr);

}  // namespace xfer

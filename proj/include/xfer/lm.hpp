#pragma once

// Two-layer LSTM language model over target text.
//
// It stores its weights in the target-side blocks of a ParameterBlocks
// container (the source blocks stay empty): target_input_embeddings,
// target_rnn (layer 0 reads the embedding only), target_attention.combine as a
// d x d projection h~ = tanh(W h), and target_output_embeddings. This lets the
// trainer drive it unchanged and keeps the mapping onto a translation decoder
// direct.

#include <filesystem>
#include <span>
#include <vector>

#include "xfer/corpus.hpp"
#include "xfer/model_io.hpp"
#include "xfer/params.hpp"
#include "xfer/seq2seq.hpp"
#include "xfer/tape.hpp"
#include "xfer/trainer.hpp"
#include "xfer/vocab.hpp"

namespace xfer {

struct LmConfig {
  int hidden_size = 1000;
  int vocab_size = 0;
  double dropout_p = 0.2;
  double init_range = 0.08;

  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

template <typename T>
struct LmState {
  std::array<Matrix<T>, 2> h, c;
};

template <typename T>
struct LmStepOutput {
  Matrix<T> logits;  // |V| x 1
  LmState<T> state;
};

template <typename T>
class LanguageModel {
 public:
  using Scalar = T;

  LanguageModel() = default;
  LanguageModel(LmConfig config, Vocabulary vocab, ParameterBlocks<T> params);

  static LanguageModel create(LmConfig config, Vocabulary vocab, Rng& rng);

  const LmConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Vocabulary& target_vocab() const { return vocab_; }
  const ParameterBlocks<T>& params() const { return params_; }
  ParameterBlocks<T>& params() { return params_; }

  LmState<T> initial_state() const;
  LmStepOutput<T> step(int prev_id, const LmState<T>& state,
                       const ForwardOptions& opts = {}) const;

  /// P(. | prefix), eval mode. The prefix excludes the implicit <s>.
  std::vector<double> next_distribution(std::span<const int> prefix) const;

  /// Teacher-forced loss over the target side of each pair; sources are ignored.
  /// Every sentence ends with </s>.
  typename Seq2Seq<T>::BatchLoss batch_loss(Tape<T>& tape, const BoundParams& p,
                                            std::span<const SentencePair* const> batch,
                                            const ForwardOptions& opts = {}) const;

  template <typename U>
  LanguageModel<U> cast() const {
    return LanguageModel<U>(config_, vocab_, params_.template cast<U>());
  }

 private:
  LmConfig config_;
  Vocabulary vocab_;
  ParameterBlocks<T> params_;
};

template <typename T>
ParameterBlocks<T> allocate_lm_params(const LmConfig& config);

/// sum_t log P(w_t | <s> context w_<t). The context is scored as conditioning
/// only. With include_eos the final log P(</s> | ...) is added.
template <typename T>
double lm_score(const LanguageModel<T>& model, std::span<const int> tokens,
                std::span<const int> context = {}, bool include_eos = false);

/// Wraps sentences as pairs with empty sources, the shape the trainer expects.
ParallelCorpus lm_corpus(const std::vector<std::vector<int>>& sentences);

/// Same optimizer recipe as the translation trainer. The config's dropout_p
/// applies; LM runs conventionally use 0.2.
template <typename T>
TrainResult<LanguageModel<T>> lm_train(LanguageModel<T> model, const ParallelCorpus& train_set,
                                       const ParallelCorpus& dev_set, const TrainConfig& config);

ModelFile to_model_file(const LanguageModel<float>& model);
LanguageModel<float> lm_from_file(const ModelFile& file);
void save_lm(const LanguageModel<float>& model, const std::filesystem::path& path);
LanguageModel<float> load_lm(const std::filesystem::path& path);

}  // namespace xfer

#pragma once

// Two-layer LSTM encoder-decoder with local-p attention and feed-input.
//
// The source sentence is read in reverse. The decoder starts from the final
// encoder (h, c) of each layer; its first layer reads the target embedding
// concatenated with the previous attentional vector. The attentional vector is
// tanh(W_c [context; h_top]) and feeds the softmax.

#include <array>
#include <span>
#include <vector>

#include "xfer/corpus.hpp"
#include "xfer/params.hpp"
#include "xfer/tape.hpp"
#include "xfer/vocab.hpp"

namespace xfer {

struct ForwardOptions {
  bool train = false;
  double dropout_p = 0.0;
  Rng* rng = nullptr;  // required when train && dropout_p > 0
};

template <typename T>
struct EncoderOutput {
  Matrix<T> states;  // d x S top-layer states, original source order
  std::array<Matrix<T>, 2> h, c;
};

template <typename T>
struct DecoderState {
  std::array<Matrix<T>, 2> h, c;
  Matrix<T> attentional;  // previous attentional vector, zero before the first step
  bool initialized = false;
};

template <typename T>
struct StepOutput {
  Matrix<T> logits;  // |V_tgt| x 1
  DecoderState<T> state;
  std::vector<T> attention;  // one weight per source position
};

struct LstmVars {
  Var input, recurrent, bias;
};

/// Tape handles for every parameter tensor.
struct BoundParams {
  Var source_embeddings;
  std::array<LstmVars, 2> source_rnn, target_rnn;
  Var position_hidden, position_out, combine;
  Var target_input_embeddings, target_output_embeddings, target_output_bias;
};

/// Binds parameters to a tape. Tensors of frozen blocks (or all tensors when
/// `grads` is null) are bound without gradients.
template <typename T>
BoundParams bind_params(Tape<T>& tape, const ParameterBlocks<T>& params,
                        ParameterBlocks<T>* grads, const FreezeMask& mask = {});

template <typename T>
class Seq2Seq {
 public:
  using Scalar = T;

  Seq2Seq() = default;
  Seq2Seq(ModelConfig config, Vocabulary source_vocab, Vocabulary target_vocab,
          ParameterBlocks<T> params);

  /// Fresh model with vocabulary sizes taken from the vocabularies.
  static Seq2Seq create(ModelConfig config, Vocabulary source_vocab, Vocabulary target_vocab,
                        Rng& rng);

  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  const Vocabulary& source_vocab() const { return source_vocab_; }
  const Vocabulary& target_vocab() const { return target_vocab_; }
  const ParameterBlocks<T>& params() const { return params_; }
  ParameterBlocks<T>& params() { return params_; }

  EncoderOutput<T> encode(std::span<const int> source, const ForwardOptions& opts = {}) const;
  DecoderState<T> initial_state(const EncoderOutput<T>& enc) const;
  StepOutput<T> decode_step(int prev_id, const DecoderState<T>& state,
                            const EncoderOutput<T>& enc, const ForwardOptions& opts = {}) const;

  /// log P(target, </s> | source) in eval mode.
  double sentence_logprob(std::span<const int> source, std::span<const int> target) const;

  struct BatchLoss {
    Var nll;  // 1x1 summed negative log-likelihood
    std::size_t tokens = 0;
  };
  /// Teacher-forced loss over a padded minibatch. Sources are reversed and
  /// left-padded; padded positions leave the encoder state untouched and are
  /// never attended to. Padded target positions are masked out of the loss.
  BatchLoss batch_loss(Tape<T>& tape, const BoundParams& p,
                       std::span<const SentencePair* const> batch,
                       const ForwardOptions& opts = {}) const;

  template <typename U>
  Seq2Seq<U> cast() const {
    return Seq2Seq<U>(config_, source_vocab_, target_vocab_, params_.template cast<U>());
  }

 private:
  ModelConfig config_;
  Vocabulary source_vocab_;
  Vocabulary target_vocab_;
  ParameterBlocks<T> params_;
};

}  // namespace xfer

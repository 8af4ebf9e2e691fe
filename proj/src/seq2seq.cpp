#include "xfer/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "xfer/error.hpp"

namespace xfer {

namespace {

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

template <typename T>
Matrix<T> maybe_dropout(const Matrix<T>& x, const ForwardOptions& o) {
  if (!o.train || o.dropout_p <= 0) return x;
  if (!o.rng) throw UsageError("forward: train mode with dropout needs an rng");
  return dropout(x, o.dropout_p, *o.rng, true);
}

template <typename T>
Var maybe_dropout(Tape<T>& tape, Var x, const ForwardOptions& o) {
  if (!o.train || o.dropout_p <= 0) return x;
  if (!o.rng) throw UsageError("forward: train mode with dropout needs an rng");
  const auto& v = tape.value(x);
  return ops::mask(tape, x, dropout_mask<T>(v.rows(), v.cols(), o.dropout_p, *o.rng));
}

template <typename T>
Var bind(Tape<T>& tape, const Matrix<T>& value, Matrix<T>* grad) {
  return tape.parameter(value, grad);
}

template <typename T>
LstmVars bind_lstm(Tape<T>& tape, const LstmWeights<T>& w, LstmWeights<T>* g) {
  return {bind(tape, w.input, g ? &g->input : nullptr),
          bind(tape, w.recurrent, g ? &g->recurrent : nullptr),
          bind(tape, w.bias, g ? &g->bias : nullptr)};
}

template <typename T>
void check_ids(std::span<const int> ids, int vocab, const char* what) {
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw DataError(std::string(what) + ": id " + std::to_string(id) +
                      " outside vocabulary of size " + std::to_string(vocab));
}

}  // namespace

template <typename T>
BoundParams bind_params(Tape<T>& tape, const ParameterBlocks<T>& p, ParameterBlocks<T>* g,
                        const FreezeMask& mask) {
  auto grad_for = [&](Block b) { return g && !mask.frozen(b) ? g : nullptr; };
  BoundParams out;
  auto* gs = grad_for(Block::SourceEmbeddings);
  out.source_embeddings = bind(tape, p.source_embeddings, gs ? &gs->source_embeddings : nullptr);
  auto* gr = grad_for(Block::SourceRnn);
  for (int l = 0; l < 2; ++l)
    out.source_rnn[l] = bind_lstm(tape, p.source_rnn[l], gr ? &gr->source_rnn[l] : nullptr);
  auto* gt = grad_for(Block::TargetRnn);
  for (int l = 0; l < 2; ++l)
    out.target_rnn[l] = bind_lstm(tape, p.target_rnn[l], gt ? &gt->target_rnn[l] : nullptr);
  auto* ga = grad_for(Block::TargetAttention);
  out.position_hidden = bind(tape, p.target_attention.position_hidden,
                             ga ? &ga->target_attention.position_hidden : nullptr);
  out.position_out = bind(tape, p.target_attention.position_out,
                          ga ? &ga->target_attention.position_out : nullptr);
  out.combine =
      bind(tape, p.target_attention.combine, ga ? &ga->target_attention.combine : nullptr);
  auto* gi = grad_for(Block::TargetInputEmbeddings);
  out.target_input_embeddings =
      bind(tape, p.target_input_embeddings, gi ? &gi->target_input_embeddings : nullptr);
  auto* go = grad_for(Block::TargetOutputEmbeddings);
  out.target_output_embeddings =
      bind(tape, p.target_output_embeddings, go ? &go->target_output_embeddings : nullptr);
  out.target_output_bias =
      bind(tape, p.target_output_bias, go ? &go->target_output_bias : nullptr);
  return out;
}

template <typename T>
Seq2Seq<T>::Seq2Seq(ModelConfig config, Vocabulary source_vocab, Vocabulary target_vocab,
                    ParameterBlocks<T> params)
    : config_(std::move(config)),
      source_vocab_(std::move(source_vocab)),
      target_vocab_(std::move(target_vocab)),
      params_(std::move(params)) {
  config_.validate();
  if (config_.src_vocab_size != source_vocab_.size() ||
      config_.tgt_vocab_size != target_vocab_.size())
    throw DataError("model: configured vocabulary sizes do not match the vocabularies");
  const auto expected = allocate_params<T>(config_);
  auto want = expected.all_tensors();
  auto have = params_.all_tensors();
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i]->rows() != have[i]->rows() || want[i]->cols() != have[i]->cols())
      throw DimensionError("model", "parameter tensor " + std::to_string(i), want[i]->rows(),
                           want[i]->cols(), have[i]->rows(), have[i]->cols());
}

template <typename T>
Seq2Seq<T> Seq2Seq<T>::create(ModelConfig config, Vocabulary source_vocab,
                              Vocabulary target_vocab, Rng& rng) {
  config.src_vocab_size = source_vocab.size();
  config.tgt_vocab_size = target_vocab.size();
  auto params = init_params<T>(config, rng);
  return Seq2Seq(std::move(config), std::move(source_vocab), std::move(target_vocab),
                 std::move(params));
}

template <typename T>
EncoderOutput<T> Seq2Seq<T>::encode(std::span<const int> source,
                                    const ForwardOptions& opts) const {
  if (source.empty()) throw DataError("encode: empty source sentence");
  check_ids<T>(source, config_.src_vocab_size, "encode");
  const int d = config_.hidden_size;
  const int len = static_cast<int>(source.size());
  EncoderOutput<T> out;
  out.states.resize(d, len);
  for (int l = 0; l < 2; ++l) {
    out.h[l] = Matrix<T>::Zero(d, 1);
    out.c[l] = Matrix<T>::Zero(d, 1);
  }
  for (int k = 0; k < len; ++k) {
    const int j = len - 1 - k;  // reversed reading order
    Matrix<T> x = params_.source_embeddings.row(source[j]).transpose();
    auto s0 = lstm_cell(x, out.h[0], out.c[0], params_.source_rnn[0]);
    out.h[0] = std::move(s0.h);
    out.c[0] = std::move(s0.c);
    auto s1 = lstm_cell(maybe_dropout(out.h[0], opts), out.h[1], out.c[1], params_.source_rnn[1]);
    out.h[1] = std::move(s1.h);
    out.c[1] = std::move(s1.c);
    out.states.col(j) = out.h[1].col(0);
  }
  return out;
}

template <typename T>
DecoderState<T> Seq2Seq<T>::initial_state(const EncoderOutput<T>& enc) const {
  DecoderState<T> s;
  s.h = enc.h;
  s.c = enc.c;
  s.attentional = Matrix<T>::Zero(config_.hidden_size, 1);
  s.initialized = true;
  return s;
}

template <typename T>
StepOutput<T> Seq2Seq<T>::decode_step(int prev_id, const DecoderState<T>& state,
                                      const EncoderOutput<T>& enc,
                                      const ForwardOptions& opts) const {
  if (!state.initialized) throw UsageError("decode_step: decoder state not initialised");
  const int prev[] = {prev_id};
  check_ids<T>(prev, config_.tgt_vocab_size, "decode_step");
  const int d = config_.hidden_size;
  const int len = static_cast<int>(enc.states.cols());
  const auto& att = params_.target_attention;

  Matrix<T> x(2 * d, 1);
  x << params_.target_input_embeddings.row(prev_id).transpose(), state.attentional;

  StepOutput<T> out;
  auto s0 = lstm_cell(x, state.h[0], state.c[0], params_.target_rnn[0]);
  auto s1 = lstm_cell(maybe_dropout(s0.h, opts), state.h[1], state.c[1], params_.target_rnn[1]);
  out.state.h = {std::move(s0.h), s1.h};
  out.state.c = {std::move(s0.c), std::move(s1.c)};

  Matrix<T> pos_hidden = (att.position_hidden * s1.h).array().tanh().matrix();
  Matrix<T> position = sigmoid<T>(att.position_out * pos_hidden) * T(len - 1);
  std::vector<std::vector<int>> columns(1);
  columns[0].resize(len);
  for (int j = 0; j < len; ++j) columns[0][j] = j;
  auto a = local_attention<T>(enc.states, columns, s1.h, position, config_.attention_window);

  Matrix<T> combined(2 * d, 1);
  combined << a.context, s1.h;
  out.state.attentional = (att.combine * combined).array().tanh().matrix();
  out.state.initialized = true;
  out.logits = params_.target_output_embeddings.transpose() *
                   maybe_dropout(out.state.attentional, opts) +
               params_.target_output_bias;
  out.attention = std::move(a.weights[0]);
  return out;
}

template <typename T>
double Seq2Seq<T>::sentence_logprob(std::span<const int> source,
                                    std::span<const int> target) const {
  if (target.empty()) throw DataError("sentence_logprob: empty target sentence");
  const auto enc = encode(source);
  auto state = initial_state(enc);
  int prev = Vocabulary::kBos;
  double total = 0;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    const int y = t < target.size() ? target[t] : Vocabulary::kEos;
    auto step = decode_step(prev, state, enc);
    const auto logp = log_softmax_columns<T>(step.logits);
    if (y < 0 || y >= logp.rows())
      throw DataError("sentence_logprob: target id " + std::to_string(y) + " out of range");
    total += static_cast<double>(logp(y, 0));
    state = std::move(step.state);
    prev = y;
  }
  return total;
}

template <typename T>
typename Seq2Seq<T>::BatchLoss Seq2Seq<T>::batch_loss(Tape<T>& tape, const BoundParams& p,
                                                      std::span<const SentencePair* const> batch,
                                                      const ForwardOptions& opts) const {
  if (batch.empty()) throw DataError("batch_loss: empty minibatch");
  const int d = config_.hidden_size;
  const int nb = static_cast<int>(batch.size());

  int max_src = 0, max_tgt = 0;
  for (const auto* sp : batch) {
    if (sp->source.empty() || sp->target.empty())
      throw DataError("batch_loss: empty sentence in minibatch");
    check_ids<T>(sp->source, config_.src_vocab_size, "batch_loss source");
    check_ids<T>(sp->target, config_.tgt_vocab_size, "batch_loss target");
    max_src = std::max<int>(max_src, static_cast<int>(sp->source.size()));
    max_tgt = std::max<int>(max_tgt, static_cast<int>(sp->target.size()));
  }

  // Encoder over reversed, left-padded sources.
  const Var zeros = tape.constant(Matrix<T>::Zero(d, nb));
  std::array<Var, 2> h = {zeros, zeros}, c = {zeros, zeros};
  std::vector<Var> top(max_src);
  for (int t = 0; t < max_src; ++t) {
    std::vector<int> ids(nb);
    std::vector<bool> active(nb);
    bool all_active = true;
    for (int b = 0; b < nb; ++b) {
      const auto& src = batch[b]->source;
      const int offset = max_src - static_cast<int>(src.size());
      active[b] = t >= offset;
      all_active = all_active && active[b];
      ids[b] = active[b] ? src[src.size() - 1 - (t - offset)] : Vocabulary::kPad;
    }
    Var x = ops::embedding(tape, p.source_embeddings, ids);
    for (int l = 0; l < 2; ++l) {
      const auto& w = p.source_rnn[l];
      Var in = l == 0 ? x : maybe_dropout(tape, h[0], opts);
      auto [hn, cn] = ops::lstm(tape, in, h[l], c[l], w.input, w.recurrent, w.bias);
      if (all_active) {
        h[l] = hn;
        c[l] = cn;
      } else {
        h[l] = ops::select_columns(tape, hn, h[l], active);
        c[l] = ops::select_columns(tape, cn, c[l], active);
      }
    }
    top[t] = h[1];
  }
  const Var states = ops::hstack<T>(tape, top);
  auto columns = std::make_shared<std::vector<std::vector<int>>>(nb);
  std::vector<T> span_scale(nb);
  for (int b = 0; b < nb; ++b) {
    const int len = static_cast<int>(batch[b]->source.size());
    const int offset = max_src - len;
    auto& cols = (*columns)[b];
    cols.resize(len);
    for (int j = 0; j < len; ++j) cols[j] = (offset + (len - 1 - j)) * nb + b;
    span_scale[b] = T(len - 1);
  }

  // Decoder, teacher forced.
  Var attentional = zeros;
  Var nll;
  std::size_t tokens = 0;
  for (int t = 0; t <= max_tgt; ++t) {
    std::vector<int> in_ids(nb), targets(nb);
    for (int b = 0; b < nb; ++b) {
      const auto& tgt = batch[b]->target;
      const int len = static_cast<int>(tgt.size());
      in_ids[b] = t == 0 ? Vocabulary::kBos : (t - 1 < len ? tgt[t - 1] : Vocabulary::kPad);
      targets[b] = t < len ? tgt[t] : (t == len ? Vocabulary::kEos : -1);
      if (targets[b] >= 0) ++tokens;
    }
    Var emb = ops::embedding(tape, p.target_input_embeddings, in_ids);
    Var x = ops::concat_rows(tape, emb, attentional);
    for (int l = 0; l < 2; ++l) {
      const auto& w = p.target_rnn[l];
      Var in = l == 0 ? x : maybe_dropout(tape, h[0], opts);
      auto [hn, cn] = ops::lstm(tape, in, h[l], c[l], w.input, w.recurrent, w.bias);
      h[l] = hn;
      c[l] = cn;
    }
    Var pos_hidden = ops::tanh(tape, ops::matmul(tape, p.position_hidden, h[1]));
    Var position = ops::scale_columns(
        tape, ops::sigmoid(tape, ops::matmul(tape, p.position_out, pos_hidden)), span_scale);
    Var context = ops::local_attention(tape, states, columns, h[1], position,
                                       config_.attention_window);
    attentional =
        ops::tanh(tape, ops::matmul(tape, p.combine, ops::concat_rows(tape, context, h[1])));
    Var logits = ops::add_bias(
        tape,
        ops::matmul_tn(tape, p.target_output_embeddings, maybe_dropout(tape, attentional, opts)),
        p.target_output_bias);
    Var step_nll = ops::softmax_nll(tape, logits, targets);
    nll = nll.valid() ? ops::add(tape, nll, step_nll) : step_nll;
  }
  return {nll, tokens};
}

template BoundParams bind_params<float>(Tape<float>&, const ParameterBlocks<float>&,
                                        ParameterBlocks<float>*, const FreezeMask&);
template BoundParams bind_params<double>(Tape<double>&, const ParameterBlocks<double>&,
                                         ParameterBlocks<double>*, const FreezeMask&);
template class Seq2Seq<float>;
template class Seq2Seq<double>;

}  // namespace xfer

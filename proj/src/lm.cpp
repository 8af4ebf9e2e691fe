#include "xfer/lm.hpp"

#include <cmath>
#include <sstream>

#include "xfer/error.hpp"

namespace xfer {

namespace {

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

void check_id(int id, int vocab, const char* what) {
  if (id < 0 || id >= vocab)
    throw DataError(std::string(what) + ": id " + std::to_string(id) +
                    " outside vocabulary of size " + std::to_string(vocab));
}

// Target-side blocks only; the LM file never carries source blocks.
constexpr std::array<Block, 4> kLmBlocks = {Block::TargetRnn, Block::TargetAttention,
                                            Block::TargetInputEmbeddings,
                                            Block::TargetOutputEmbeddings};

std::string format_real(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

void LmConfig::validate() const {
  if (hidden_size < 1) throw UsageError("lm config: hidden_size must be >= 1");
  if (vocab_size < Vocabulary::kReserved)
    throw UsageError("lm config: vocab_size must cover the reserved types");
  if (dropout_p < 0 || dropout_p >= 1) throw UsageError("lm config: dropout_p must lie in [0, 1)");
  if (init_range < 0) throw UsageError("lm config: init_range must be non-negative");
}

template <typename T>
ParameterBlocks<T> allocate_lm_params(const LmConfig& c) {
  const int d = c.hidden_size, v = c.vocab_size;
  ParameterBlocks<T> p;
  for (auto& l : p.target_rnn) {
    l.input = Matrix<T>::Zero(4 * d, d);
    l.recurrent = Matrix<T>::Zero(4 * d, d);
    l.bias = Matrix<T>::Zero(4 * d, 1);
  }
  p.target_attention.combine = Matrix<T>::Zero(d, d);
  p.target_input_embeddings = Matrix<T>::Zero(v, d);
  p.target_output_embeddings = Matrix<T>::Zero(d, v);
  p.target_output_bias = Matrix<T>::Zero(v, 1);
  return p;
}

template <typename T>
LanguageModel<T>::LanguageModel(LmConfig config, Vocabulary vocab, ParameterBlocks<T> params)
    : config_(config), vocab_(std::move(vocab)), params_(std::move(params)) {
  config_.validate();
  if (config_.vocab_size != vocab_.size())
    throw DataError("lm: configured vocabulary size does not match the vocabulary");
  const auto expected = allocate_lm_params<T>(config_);
  auto want = expected.all_tensors();
  auto have = params_.all_tensors();
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i]->rows() != have[i]->rows() || want[i]->cols() != have[i]->cols())
      throw DimensionError("lm", "parameter tensor " + std::to_string(i), want[i]->rows(),
                           want[i]->cols(), have[i]->rows(), have[i]->cols());
}

template <typename T>
LanguageModel<T> LanguageModel<T>::create(LmConfig config, Vocabulary vocab, Rng& rng) {
  config.vocab_size = vocab.size();
  config.validate();
  auto params = allocate_lm_params<T>(config);
  for (auto* t : params.all_tensors()) fill_uniform(*t, config.init_range, rng);
  return LanguageModel(config, std::move(vocab), std::move(params));
}

template <typename T>
LmState<T> LanguageModel<T>::initial_state() const {
  LmState<T> s;
  for (int l = 0; l < 2; ++l) {
    s.h[l] = Matrix<T>::Zero(config_.hidden_size, 1);
    s.c[l] = Matrix<T>::Zero(config_.hidden_size, 1);
  }
  return s;
}

template <typename T>
LmStepOutput<T> LanguageModel<T>::step(int prev_id, const LmState<T>& state,
                                       const ForwardOptions& opts) const {
  check_id(prev_id, config_.vocab_size, "lm step");
  Matrix<T> x = params_.target_input_embeddings.row(prev_id).transpose();
  auto s0 = lstm_cell(x, state.h[0], state.c[0], params_.target_rnn[0]);
  auto s1 = lstm_cell(maybe_dropout(s0.h, opts), state.h[1], state.c[1], params_.target_rnn[1]);
  Matrix<T> proj = (params_.target_attention.combine * s1.h).array().tanh().matrix();
  LmStepOutput<T> out;
  out.logits = params_.target_output_embeddings.transpose() * maybe_dropout(proj, opts) +
               params_.target_output_bias;
  out.state.h = {std::move(s0.h), std::move(s1.h)};
  out.state.c = {std::move(s0.c), std::move(s1.c)};
  return out;
}

template <typename T>
std::vector<double> LanguageModel<T>::next_distribution(std::span<const int> prefix) const {
  auto state = initial_state();
  int prev = Vocabulary::kBos;
  for (int id : prefix) {
    state = step(prev, state).state;
    prev = id;
  }
  const auto logits = step(prev, state).logits;
  const auto p = softmax<T>(std::span<const T>(logits.data(), logits.size()));
  return {p.begin(), p.end()};
}

template <typename T>
typename Seq2Seq<T>::BatchLoss LanguageModel<T>::batch_loss(
    Tape<T>& tape, const BoundParams& p, std::span<const SentencePair* const> batch,
    const ForwardOptions& opts) const {
  if (batch.empty()) throw DataError("lm batch_loss: empty minibatch");
  const int d = config_.hidden_size;
  const int nb = static_cast<int>(batch.size());
  int max_len = 0;
  for (const auto* sp : batch) {
    if (sp->target.empty()) throw DataError("lm batch_loss: empty sentence in minibatch");
    for (int id : sp->target) check_id(id, config_.vocab_size, "lm batch_loss");
    max_len = std::max<int>(max_len, static_cast<int>(sp->target.size()));
  }
  const Var zeros = tape.constant(Matrix<T>::Zero(d, nb));
  std::array<Var, 2> h = {zeros, zeros}, c = {zeros, zeros};
  Var nll;
  std::size_t tokens = 0;
  for (int t = 0; t <= max_len; ++t) {
    std::vector<int> in_ids(nb), targets(nb);
    for (int b = 0; b < nb; ++b) {
      const auto& s = batch[b]->target;
      const int len = static_cast<int>(s.size());
      in_ids[b] = t == 0 ? Vocabulary::kBos : (t - 1 < len ? s[t - 1] : Vocabulary::kPad);
      targets[b] = t < len ? s[t] : (t == len ? Vocabulary::kEos : -1);
      if (targets[b] >= 0) ++tokens;
    }
    Var x = ops::embedding(tape, p.target_input_embeddings, in_ids);
    for (int l = 0; l < 2; ++l) {
      const auto& w = p.target_rnn[l];
      Var in = l == 0 ? x : maybe_dropout(tape, h[0], opts);
      auto [hn, cn] = ops::lstm(tape, in, h[l], c[l], w.input, w.recurrent, w.bias);
      h[l] = hn;
      c[l] = cn;
    }
    Var proj = ops::tanh(tape, ops::matmul(tape, p.combine, h[1]));
    Var logits = ops::add_bias(
        tape, ops::matmul_tn(tape, p.target_output_embeddings, maybe_dropout(tape, proj, opts)),
        p.target_output_bias);
    Var step_nll = ops::softmax_nll(tape, logits, targets);
    nll = nll.valid() ? ops::add(tape, nll, step_nll) : step_nll;
  }
  return {nll, tokens};
}

template <typename T>
double lm_score(const LanguageModel<T>& model, std::span<const int> tokens,
                std::span<const int> context, bool include_eos) {
  if (tokens.empty()) throw DataError("lm_score: empty token sequence");
  auto state = model.initial_state();
  int prev = Vocabulary::kBos;
  for (int id : context) {
    state = model.step(prev, state).state;
    prev = id;
  }
  double total = 0;
  const std::size_t n = tokens.size() + (include_eos ? 1 : 0);
  for (std::size_t t = 0; t < n; ++t) {
    const int y = t < tokens.size() ? tokens[t] : Vocabulary::kEos;
    check_id(y, model.config().vocab_size, "lm_score");
    auto out = model.step(prev, state);
    total += static_cast<double>(log_softmax_columns<T>(out.logits)(y, 0));
    state = std::move(out.state);
    prev = y;
  }
  return total;
}

ParallelCorpus lm_corpus(const std::vector<std::vector<int>>& sentences) {
  ParallelCorpus out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back({{}, s});
  return out;
}

template <typename T>
TrainResult<LanguageModel<T>> lm_train(LanguageModel<T> model, const ParallelCorpus& train_set,
                                       const ParallelCorpus& dev_set, const TrainConfig& config) {
  return train(std::move(model), train_set, dev_set, config);
}

ModelFile to_model_file(const LanguageModel<float>& model) {
  const auto& c = model.config();
  ModelFile f;
  f.header["kind"] = "lm";
  f.header["hidden_size"] = std::to_string(c.hidden_size);
  f.header["vocab_size"] = std::to_string(c.vocab_size);
  f.header["dropout_p"] = format_real(c.dropout_p);
  f.header["init_range"] = format_real(c.init_range);
  f.vocabularies.emplace_back("target", model.vocab());
  for (Block b : kLmBlocks) {
    ModelBlock mb{std::string(block_name(b)), {}};
    for (const auto* t : model.params().tensors(b)) mb.tensors.push_back(*t);
    f.blocks.push_back(std::move(mb));
  }
  return f;
}

LanguageModel<float> lm_from_file(const ModelFile& f) {
  if (f.header_value("kind") != "lm")
    throw ModelFormatError("model file holds a '" + f.header_value("kind") +
                           "' model, expected lm");
  LmConfig c;
  try {
    c.hidden_size = std::stoi(f.header_value("hidden_size"));
    c.vocab_size = std::stoi(f.header_value("vocab_size"));
    c.dropout_p = std::stod(f.header_value("dropout_p"));
    c.init_range = std::stod(f.header_value("init_range"));
  } catch (const std::logic_error&) {
    throw ModelFormatError("model file header holds a malformed number");
  }
  auto params = allocate_lm_params<float>(c);
  for (Block b : kLmBlocks) {
    const auto& mb = f.block(std::string(block_name(b)));
    auto dst = params.tensors(b);
    if (mb.tensors.size() != dst.size())
      throw ModelFormatError("block '" + mb.name + "' holds " + std::to_string(mb.tensors.size()) +
                             " tensors, expected " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (mb.tensors[i].rows() != dst[i]->rows() || mb.tensors[i].cols() != dst[i]->cols())
        throw ModelFormatError("block '" + mb.name + "' tensor " + std::to_string(i) +
                               " has the wrong shape");
      *dst[i] = mb.tensors[i];
    }
  }
  return LanguageModel<float>(c, f.vocabulary("target"), std::move(params));
}

void save_lm(const LanguageModel<float>& model, const std::filesystem::path& path) {
  write_model_file(path, to_model_file(model));
}

LanguageModel<float> load_lm(const std::filesystem::path& path) {
  return lm_from_file(read_model_file(path));
}

template class LanguageModel<float>;
template class LanguageModel<double>;
template ParameterBlocks<float> allocate_lm_params<float>(const LmConfig&);
template ParameterBlocks<double> allocate_lm_params<double>(const LmConfig&);
template double lm_score<float>(const LanguageModel<float>&, std::span<const int>,
                                std::span<const int>, bool);
template double lm_score<double>(const LanguageModel<double>&, std::span<const int>,
                                 std::span<const int>, bool);
template TrainResult<LanguageModel<float>> lm_train<float>(LanguageModel<float>,
                                                           const ParallelCorpus&,
                                                           const ParallelCorpus&,
                                                           const TrainConfig&);
template TrainResult<LanguageModel<double>> lm_train<double>(LanguageModel<double>,
                                                             const ParallelCorpus&,
                                                             const ParallelCorpus&,
                                                             const TrainConfig&);

}  // namespace xfer

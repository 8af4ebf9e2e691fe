#include "xfer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "xfer/error.hpp"
#include "xfer/io.hpp"
#include "xfer/lm.hpp"
#include "xfer/seq2seq.hpp"
#include "xfer/tape.hpp"
#include "xfer/transfer.hpp"

namespace xfer {

void TrainConfig::validate() const {
  if (minibatch_size < 1) throw UsageError("train: minibatch_size must be >= 1");
  if (!(decay > 0 && decay < 1)) throw UsageError("train: decay must lie in (0, 1)");
  if (lr < 0) throw UsageError("train: lr must be non-negative");
  if (!(clip_threshold > 0)) throw UsageError("train: clip_threshold must be positive");
  if (epochs < 0) throw UsageError("train: epochs must be non-negative");
  if (dropout_p < 0 || dropout_p >= 1) throw UsageError("train: dropout_p must lie in [0, 1)");
  if (l2 < 0) throw UsageError("train: l2 must be non-negative");
}

std::string LearningCurve::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,train_ppl,dev_ppl,lr,seconds\n";
  for (const auto& r : records)
    out << r.epoch << ',' << r.train_ppl << ',' << r.dev_ppl << ',' << r.lr << ',' << r.seconds
        << '\n';
  return out.str();
}

void LearningCurve::write_csv(const std::filesystem::path& path) const {
  write_file_atomic(path, to_csv());
}

int LearningCurve::first_epoch_below(double threshold) const {
  for (const auto& r : records)
    if (r.dev_ppl <= threshold) return r.epoch;
  return -1;
}

std::vector<std::vector<std::size_t>> make_minibatches(const ParallelCorpus& corpus,
                                                       std::size_t size, std::uint64_t seed) {
  if (size < 1) throw UsageError("make_minibatches: size must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = corpus[a];
    const auto& y = corpus[b];
    if (x.source.size() != y.source.size()) return x.source.size() < y.source.size();
    return x.target.size() < y.target.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + size));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

template <class Model>
std::pair<double, std::size_t> corpus_nll(const Model& model, const ParallelCorpus& corpus,
                                          std::size_t batch_size) {
  using T = typename Model::Scalar;
  if (corpus.empty()) throw DataError("perplexity: empty corpus");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus[a].source.size() < corpus[b].source.size();
  });
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const SentencePair*> batch;
    for (std::size_t k = i; k < std::min(order.size(), i + batch_size); ++k)
      batch.push_back(&corpus[order[k]]);
    Tape<T> tape;
    const auto bound = bind_params<T>(tape, model.params(), nullptr);
    const auto loss = model.batch_loss(tape, bound, batch);
    nll += static_cast<double>(tape.value(loss.nll)(0, 0));
    tokens += loss.tokens;
  }
  return {nll, tokens};
}

template <class Model>
double perplexity(const Model& model, const ParallelCorpus& corpus, std::size_t batch_size) {
  const auto [nll, tokens] = corpus_nll(model, corpus, batch_size);
  return std::exp(nll / static_cast<double>(tokens));
}

template <class Model>
TrainResult<Model> train(Model model, const ParallelCorpus& train_set,
                         const ParallelCorpus& dev_set, const TrainConfig& config,
                         const FreezeMask& mask,
                         const ParameterBlocks<typename Model::Scalar>* anchor) {
  using T = typename Model::Scalar;
  using Clock = std::chrono::steady_clock;
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training corpus");
  const ParallelCorpus& dev = dev_set.empty() ? train_set : dev_set;
  if (config.l2 > 0 && !anchor) throw UsageError("train: l2 > 0 needs anchor weights");

  Rng rng(config.seed);
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  TrainResult<Model> result{model, {}};
  double lr = config.lr;
  double best = perplexity(model, dev);
  result.curve.records.push_back(
      {0, config.track_train_ppl ? perplexity(model, train_set) : 0.0, best, lr, elapsed()});
  if (config.log)
    *config.log << "epoch 0 dev_ppl " << best << " lr " << lr << std::endl;

  auto& params = model.params();
  auto grads = params.zeros_like();
  std::vector<Matrix<T>*> grad_tensors;
  for (Block b : kAllBlocks)
    if (!mask.frozen(b))
      for (auto* g : grads.tensors(b)) grad_tensors.push_back(g);

  ForwardOptions opts{true, config.dropout_p, &rng};
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_minibatches(train_set, config.minibatch_size, rng());
    double epoch_nll = 0;
    std::size_t epoch_tokens = 0;
    for (std::size_t m = 0; m < batches.size(); ++m) {
      std::vector<const SentencePair*> batch;
      for (auto i : batches[m]) batch.push_back(&train_set[i]);
      grads.set_zero();
      Tape<T> tape;
      const auto bound = bind_params<T>(tape, params, &grads, mask);
      const auto loss = model.batch_loss(tape, bound, batch, opts);
      const double value = static_cast<double>(tape.value(loss.nll)(0, 0));
      if (!std::isfinite(value))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", minibatch " + std::to_string(m + 1));
      epoch_nll += value;
      epoch_tokens += loss.tokens;
      tape.backward(ops::scale(tape, loss.nll, T(1) / T(batch.size())));
      if (config.l2 > 0) l2_toward_parent(grads, params, *anchor, T(config.l2), mask);
      clip_gradients<T>(grad_tensors, T(config.clip_threshold));
      sgd_step(params, grads, T(lr), mask);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.dev_ppl = perplexity(model, dev);
    rec.train_ppl = config.track_train_ppl
                        ? perplexity(model, train_set)
                        : std::exp(epoch_nll / static_cast<double>(epoch_tokens));
    if (!std::isfinite(rec.dev_ppl))
      throw NumericError("train: non-finite dev perplexity after epoch " + std::to_string(epoch));
    rec.seconds = elapsed();
    result.curve.records.push_back(rec);
    if (config.log)
      *config.log << "epoch " << epoch << " train_ppl " << rec.train_ppl << " dev_ppl "
                  << rec.dev_ppl << " lr " << lr << " (" << rec.seconds << "s)" << std::endl;

    if (rec.dev_ppl < best - 1e-6) {
      best = rec.dev_ppl;
      result.model = model;
    } else {
      lr *= config.decay;
    }
  }
  return result;
}

#define XFER_INSTANTIATE(M)                                                                     \
  template std::pair<double, std::size_t> corpus_nll<M>(const M&, const ParallelCorpus&,        \
                                                        std::size_t);                           \
  template double perplexity<M>(const M&, const ParallelCorpus&, std::size_t);                  \
  template TrainResult<M> train<M>(M, const ParallelCorpus&, const ParallelCorpus&,             \
                                   const TrainConfig&, const FreezeMask&,                       \
                                   const ParameterBlocks<typename M::Scalar>*);

XFER_INSTANTIATE(Seq2Seq<float>)
XFER_INSTANTIATE(Seq2Seq<double>)
XFER_INSTANTIATE(LanguageModel<float>)
XFER_INSTANTIATE(LanguageModel<double>)

#undef XFER_INSTANTIATE

}  // namespace xfer

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "xfer/corpus.hpp"
#include "xfer/params.hpp"

namespace xfer {

/// Defaults are full-scale values; small runs override
/// minibatch_size, epochs and the model's hidden size.
struct TrainConfig {
  int minibatch_size = 128;
  double lr = 0.5;
  double decay = 0.9;
  double clip_threshold = 5.0;
  int epochs = 100;
  double dropout_p = 0.5;
  std::uint64_t seed = 1;
  double l2 = 0.0;               // strength of the pull toward the anchor (parent) weights
  bool track_train_ppl = true;   // eval-mode train perplexity after every epoch
  std::ostream* log = nullptr;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_ppl = 0;
  double dev_ppl = 0;
  double lr = 0;
  double seconds = 0;
};

/// Epoch 0 holds the untrained starting point.
struct LearningCurve {
  std::vector<EpochRecord> records;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  /// First epoch whose dev perplexity is at or below `threshold`, or -1.
  int first_epoch_below(double threshold) const;
};

template <class Model>
struct TrainResult {
  Model model;  // best-dev snapshot
  LearningCurve curve;
};

/// Pairs bucketed by source length with seeded within-bucket order, cut into
/// minibatches, then emitted in seeded order. Every pair appears exactly once.
std::vector<std::vector<std::size_t>> make_minibatches(const ParallelCorpus& corpus,
                                                       std::size_t size, std::uint64_t seed);

/// exp(-sum log P / #target tokens), </s> included. Eval mode.
template <class Model>
double perplexity(const Model& model, const ParallelCorpus& corpus, std::size_t batch_size = 64);

/// Summed eval-mode negative log-likelihood and token count.
template <class Model>
std::pair<double, std::size_t> corpus_nll(const Model& model, const ParallelCorpus& corpus,
                                          std::size_t batch_size = 64);

/// Minibatch SGD with gradient clipping and learning-rate decay on dev
/// plateaus. Frozen blocks are never written. When `anchor` is given and
/// config.l2 > 0 the gradient of every trainable block gains
/// l2 * (theta - anchor).
template <class Model>
TrainResult<Model> train(Model model, const ParallelCorpus& train_set,
                         const ParallelCorpus& dev_set, const TrainConfig& config,
                         const FreezeMask& mask = {},
                         const ParameterBlocks<typename Model::Scalar>* anchor = nullptr);

}  // namespace xfer

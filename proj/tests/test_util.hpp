#pragma once

// Shared fixtures for the test binaries.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xfer/corpus.hpp"
#include "xfer/lm.hpp"
#include "xfer/params.hpp"
#include "xfer/seq2seq.hpp"
#include "xfer/tape.hpp"
#include "xfer/vocab.hpp"

namespace xfer::testing {

inline Vocabulary numbered_vocab(const std::string& prefix, int types) {
  std::vector<std::string> t;
  for (int i = 0; i < types; ++i) t.push_back(prefix + std::to_string(i));
  return Vocabulary::from_types(t);
}

inline ModelConfig tiny_config(int hidden = 4, int window = 2) {
  ModelConfig c;
  c.hidden_size = hidden;
  c.attention_window = window;
  c.init_range = 0.3;
  c.dropout_p = 0.0;
  return c;
}

template <typename T>
Seq2Seq<T> tiny_model(std::uint64_t seed, int hidden = 4, int src_types = 5, int tgt_types = 4,
                      int window = 2, double init_range = 0.3) {
  Rng rng(seed);
  auto c = tiny_config(hidden, window);
  c.init_range = init_range;
  return Seq2Seq<T>::create(c, numbered_vocab("s", src_types), numbered_vocab("t", tgt_types),
                            rng);
}

/// Random pairs over the non-reserved ids (plus <unk>), lengths in [1, max_len].
inline ParallelCorpus random_pairs(std::uint64_t seed, int count, int src_vocab, int tgt_vocab,
                                   int max_len) {
  Rng rng(seed);
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> s(Vocabulary::kUnk, src_vocab - 1);
  std::uniform_int_distribution<int> t(Vocabulary::kUnk, tgt_vocab - 1);
  ParallelCorpus out;
  for (int n = 0; n < count; ++n) {
    SentencePair p;
    const int ls = len(rng), lt = len(rng);
    for (int i = 0; i < ls; ++i) {
      int id = s(rng);
      if (id == Vocabulary::kBos || id == Vocabulary::kEos) id = Vocabulary::kUnk;
      p.source.push_back(id);
    }
    for (int i = 0; i < lt; ++i) {
      int id = t(rng);
      if (id == Vocabulary::kBos || id == Vocabulary::kEos) id = Vocabulary::kUnk;
      p.target.push_back(id);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<const SentencePair*> pointers(const ParallelCorpus& c) {
  std::vector<const SentencePair*> out;
  for (const auto& p : c) out.push_back(&p);
  return out;
}

/// Summed batch NLL; optional dropout replays the same masks for a fixed seed.
template <class Model>
double batch_nll(const Model& m, const ParallelCorpus& batch, double dropout_p = 0,
                 std::uint64_t dropout_seed = 0) {
  using T = typename Model::Scalar;
  Tape<T> tape;
  const auto bound = bind_params<T>(tape, m.params(), nullptr);
  Rng rng(dropout_seed);
  ForwardOptions opts{dropout_p > 0, dropout_p, &rng};
  const auto ptrs = pointers(batch);
  return static_cast<double>(tape.value(m.batch_loss(tape, bound, ptrs, opts).nll)(0, 0));
}

template <class Model>
ParameterBlocks<typename Model::Scalar> batch_grads(const Model& m, const ParallelCorpus& batch,
                                                    double dropout_p = 0,
                                                    std::uint64_t dropout_seed = 0) {
  using T = typename Model::Scalar;
  auto grads = m.params().zeros_like();
  Tape<T> tape;
  const auto bound = bind_params<T>(tape, m.params(), &grads);
  Rng rng(dropout_seed);
  ForwardOptions opts{dropout_p > 0, dropout_p, &rng};
  const auto ptrs = pointers(batch);
  tape.backward(m.batch_loss(tape, bound, ptrs, opts).nll);
  return grads;
}

struct GradCheck {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

/// Central differences on up to `per_tensor` random entries of every tensor.
/// Relative error is |a - n| / max(|a|, |n|, floor).
template <class Model>
GradCheck gradient_check(Model model, const ParallelCorpus& batch, std::uint64_t seed,
                         int per_tensor = 8, double eps = 1e-5, double dropout_p = 0,
                         double floor = 1e-4) {
  const auto analytic = batch_grads(model, batch, dropout_p, seed);
  auto params = model.params().all_tensors();
  const auto grads = analytic.all_tensors();
  Rng rng(seed);
  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    if (p.size() == 0) continue;
    std::uniform_int_distribution<Eigen::Index> pick(0, p.size() - 1);
    for (int n = 0; n < per_tensor; ++n) {
      const auto i = pick(rng);
      const auto saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = batch_nll(model, batch, dropout_p, seed);
      p.data()[i] = saved - eps;
      const double down = batch_nll(model, batch, dropout_p, seed);
      p.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = static_cast<double>(grads[k]->data()[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xfer_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace xfer::testing

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "../test_util.hpp"
#include "xfer/error.hpp"
#include "xfer/decoder.hpp"
#include "xfer/synth.hpp"
#include "xfer/trainer.hpp"

using namespace xfer;
using namespace xfer::testing;

namespace {

// Copy task over 3 word types.
ParallelCorpus copy_pairs(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::uniform_int_distribution<int> w(4, 6), len(1, 4);
  ParallelCorpus out;
  for (int i = 0; i < count; ++i) {
    SentencePair p;
    for (int k = len(rng); k > 0; --k) p.source.push_back(w(rng));
    p.target = p.source;
    out.push_back(p);
  }
  return out;
}

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.minibatch_size = 8;
  c.epochs = epochs;
  c.dropout_p = 0;
  c.lr = 0.5;
  return c;
}

}  // namespace

TEST_CASE("minibatches partition the corpus and group similar lengths") {
  const auto corpus = random_pairs(1, 50, 9, 9, 8);
  const auto batches = make_minibatches(corpus, 8, 3);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.size() <= 8);
    seen.insert(b.begin(), b.end());
  }
  CHECK(seen.size() == 50);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 50);
  CHECK(make_minibatches(corpus, 8, 3) == batches);
  // Within a batch the source lengths are sorted.
  for (const auto& b : batches)
    for (std::size_t i = 1; i < b.size(); ++i)
      CHECK(corpus[b[i - 1]].source.size() <= corpus[b[i]].source.size());
  CHECK_THROWS_AS(make_minibatches(corpus, 0, 1), UsageError);
}

TEST_CASE("perplexity is exp of the per-token negative log-likelihood") {
  const auto m = tiny_model<double>(2);
  const auto corpus = random_pairs(3, 7, 9, 8, 5);
  const auto [nll, tokens] = corpus_nll(m, corpus, 3);
  CHECK(tokens == target_token_count(corpus));
  double direct = 0;
  for (const auto& p : corpus) direct -= m.sentence_logprob(p.source, p.target);
  CHECK(nll == doctest::Approx(direct));
  CHECK(perplexity(m, corpus) == doctest::Approx(std::exp(direct / tokens)));
}

TEST_CASE("training lowers dev perplexity on a copy task") {
  auto m = tiny_model<float>(4, 8, 3, 3, 3);
  const auto train_set = copy_pairs(1, 200), dev = copy_pairs(2, 40);
  auto c = quick(6);
  const auto r = train(m, train_set, dev, c);
  REQUIRE(r.curve.records.size() == 7);
  CHECK(r.curve.records.front().epoch == 0);
  double best = r.curve.records.front().dev_ppl;
  for (const auto& rec : r.curve.records) best = std::min(best, rec.dev_ppl);
  CHECK(best < 0.5 * r.curve.records.front().dev_ppl);
  // The returned model is the best-dev snapshot.
  CHECK(perplexity(r.model, dev) == doctest::Approx(best).epsilon(1e-4));
}

TEST_CASE("learning rate decays only when dev stops improving") {
  auto m = tiny_model<float>(5, 6, 3, 3, 3);
  const auto train_set = copy_pairs(3, 100), dev = copy_pairs(4, 20);
  auto c = quick(8);
  c.decay = 0.5;
  const auto r = train(m, train_set, dev, c);
  double best = r.curve.records[0].dev_ppl;
  for (std::size_t e = 1; e + 1 < r.curve.records.size(); ++e) {
    const auto& rec = r.curve.records[e];
    const bool improved = rec.dev_ppl < best - 1e-6;
    best = std::min(best, rec.dev_ppl);
    const double next_lr = r.curve.records[e + 1].lr;
    CHECK(next_lr == doctest::Approx(improved ? rec.lr : rec.lr * 0.5));
  }
}

TEST_CASE("an all-frozen mask leaves the model untouched") {
  const auto m = tiny_model<float>(6);
  const auto pairs = random_pairs(5, 20, 9, 8, 4);
  auto c = quick(3);
  const auto r = train(m, pairs, pairs, c, FreezeMask::all());
  CHECK(bitwise_equal(r.model.params(), m.params()));
  for (const auto& rec : r.curve.records)
    CHECK(rec.train_ppl == doctest::Approx(r.curve.records.front().train_ppl));
}

TEST_CASE("a non-finite loss aborts with a numeric error") {
  auto m = tiny_model<float>(7);
  m.params().target_output_bias(4, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto pairs = random_pairs(6, 10, 9, 8, 4);
  CHECK_THROWS_AS(train(m, pairs, pairs, quick(2)), NumericError);
}

TEST_CASE("training is deterministic for a seed") {
  const auto m = tiny_model<float>(8);
  const auto pairs = random_pairs(7, 30, 9, 8, 4);
  auto c = quick(2);
  c.dropout_p = 0.3;
  const auto a = train(m, pairs, pairs, c);
  const auto b = train(m, pairs, pairs, c);
  CHECK(bitwise_equal(a.model.params(), b.model.params()));
}

TEST_CASE("learning curves serialise as CSV") {
  LearningCurve c;
  c.records.push_back({0, 10.0, 12.0, 0.5, 0.0});
  c.records.push_back({1, 5.0, 6.0, 0.5, 1.5});
  const auto csv = c.to_csv();
  CHECK(csv.rfind("epoch,train_ppl,dev_ppl,lr,seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(c.first_epoch_below(6.0) == 1);
  CHECK(c.first_epoch_below(12.0) == 0);
  CHECK(c.first_epoch_below(1.0) == -1);
}

TEST_CASE("invalid training configurations are usage errors") {
  TrainConfig c;
  c.minibatch_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.dropout_p = 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("a copy language is memorised and reproduced by greedy decoding") {
  Rng rng(21);
  std::uniform_int_distribution<int> w(0, 19), len(3, 8);
  TokenizedCorpus mono;
  for (int i = 0; i < 550; ++i) {
    Sentence s;
    for (int k = len(rng); k > 0; --k) s.push_back("w" + std::to_string(w(rng)));
    mono.push_back(s);
  }
  TokenizedCorpus head(mono.begin(), mono.begin() + 500), tail(mono.begin() + 500, mono.end());
  const auto train_text = make_copy_corpus(head), dev_text = make_copy_corpus(tail);
  const auto vocab = Vocabulary::build(train_text.source);
  ModelConfig mc;
  mc.hidden_size = 32;
  mc.attention_window = 2;
  mc.init_range = 0.1;
  Rng init(22);
  auto m = Seq2Seq<float>::create(mc, vocab, vocab, init);
  TrainConfig c;
  c.minibatch_size = 4;
  c.epochs = 30;
  c.dropout_p = 0.0;
  const auto train_set = encode_bitext(train_text, vocab, vocab);
  const auto dev = encode_bitext(dev_text, vocab, vocab);
  const auto r = train(std::move(m), train_set, dev, c);
  CHECK(perplexity(r.model, train_set) < 1.5);

  // Held-out sentences, so this is copying rather than recall.
  std::size_t right = 0, total = 0;
  for (const auto& p : dev) {
    const auto out = beam_search(r.model, p.source, BeamOptions{1, 20}).front().tokens;
    for (std::size_t k = 0; k < p.target.size(); ++k, ++total)
      right += k < out.size() && out[k] == p.target[k];
  }
  CHECK(double(right) / total >= 0.95);
}

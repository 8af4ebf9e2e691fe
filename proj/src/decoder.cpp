#include "xfer/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xfer/error.hpp"

namespace xfer {

template <typename T>
Ensemble<T>::Ensemble(std::vector<const Seq2Seq<T>*> models, EnsembleMode mode)
    : models_(std::move(models)), mode_(mode) {
  if (models_.empty()) throw UsageError("ensemble: no models");
  for (std::size_t k = 1; k < models_.size(); ++k) {
    if (!(models_[k]->target_vocab() == models_[0]->target_vocab()))
      throw DataError("ensemble: model " + std::to_string(k + 1) +
                      " has a different target vocabulary");
    if (!(models_[k]->source_vocab() == models_[0]->source_vocab()))
      throw DataError("ensemble: model " + std::to_string(k + 1) +
                      " has a different source vocabulary");
  }
}

template <typename T>
typename Ensemble<T>::State Ensemble<T>::start(std::span<const int> source) const {
  if (source.empty()) throw DataError("decode: empty source sentence");
  auto encoded = std::make_shared<std::vector<EncoderOutput<T>>>();
  State s;
  for (const auto* m : models_) {
    encoded->push_back(m->encode(source));
    s.members.push_back(m->initial_state(encoded->back()));
  }
  s.encoded = std::move(encoded);
  return s;
}

template <typename T>
typename Ensemble<T>::Step Ensemble<T>::step(int prev_id, const State& state) const {
  const std::size_t k = models_.size();
  const auto vocab = static_cast<std::size_t>(target_vocab().size());
  Step out;
  out.state.encoded = state.encoded;
  std::vector<double> acc(vocab, 0.0);
  for (std::size_t m = 0; m < k; ++m) {
    auto s = models_[m]->decode_step(prev_id, state.members[m], (*state.encoded)[m]);
    const auto logp = log_softmax_columns<T>(s.logits);
    for (std::size_t v = 0; v < vocab; ++v) {
      const double l = static_cast<double>(logp(v, 0));
      acc[v] += mode_ == EnsembleMode::Probability && k > 1 ? std::exp(l) : l;
    }
    if (out.attention.empty()) out.attention.assign(s.attention.size(), 0.0);
    for (std::size_t j = 0; j < s.attention.size(); ++j)
      out.attention[j] += static_cast<double>(s.attention[j]) / double(k);
    out.state.members.push_back(std::move(s.state));
  }
  out.logprobs.resize(vocab);
  if (k == 1) {
    out.logprobs = std::move(acc);
    return out;
  }
  if (mode_ == EnsembleMode::Probability) {
    for (std::size_t v = 0; v < vocab; ++v) out.logprobs[v] = std::log(acc[v] / double(k));
  } else {
    double mx = -std::numeric_limits<double>::infinity();
    for (auto& a : acc) {
      a /= double(k);
      mx = std::max(mx, a);
    }
    double z = 0;
    for (double a : acc) z += std::exp(a - mx);
    const double lz = mx + std::log(z);
    for (std::size_t v = 0; v < vocab; ++v) out.logprobs[v] = acc[v] - lz;
  }
  return out;
}

template <typename T>
double Ensemble<T>::sequence_logprob(std::span<const int> source,
                                     std::span<const int> target) const {
  auto state = start(source);
  int prev = Vocabulary::kBos;
  double total = 0;
  for (std::size_t t = 0; t <= target.size(); ++t) {
    const int y = t < target.size() ? target[t] : Vocabulary::kEos;
    auto s = step(prev, state);
    if (y < 0 || y >= static_cast<int>(s.logprobs.size()))
      throw DataError("sequence_logprob: target id " + std::to_string(y) + " out of range");
    total += s.logprobs[y];
    state = std::move(s.state);
    prev = y;
  }
  return total;
}

template <typename T>
std::vector<Hypothesis> beam_search(const Ensemble<T>& ensemble, std::span<const int> source,
                                    const BeamOptions& options) {
  if (options.beam < 1) throw UsageError("beam_search: beam must be >= 1");
  if (options.max_len < 1) throw UsageError("beam_search: max_len must be >= 1");

  struct Live {
    Hypothesis hyp;
    int prev;
    typename Ensemble<T>::State state;
  };
  struct Candidate {
    std::size_t parent;
    int token;
    double logprob;
    int attention;
  };

  std::vector<Live> live;
  live.push_back({{}, Vocabulary::kBos, ensemble.start(source)});
  std::vector<Hypothesis> finished;
  const int vocab = ensemble.target_vocab().size();

  for (int t = 0; t < options.max_len && !live.empty(); ++t) {
    std::vector<typename Ensemble<T>::Step> steps;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      steps.push_back(ensemble.step(live[i].prev, live[i].state));
      const auto& att = steps.back().attention;
      const int focus = static_cast<int>(std::max_element(att.begin(), att.end()) - att.begin());
      for (int v = 0; v < vocab; ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
        cands.push_back({i, v, live[i].hyp.logprob + steps.back().logprobs[v], focus});
      }
    }
    // Every candidate at this depth has the same length, so raw and
    // normalised scores order them identically.
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.logprob > b.logprob;
    });
    if (cands.size() > static_cast<std::size_t>(options.beam)) cands.resize(options.beam);

    std::vector<Live> next;
    for (const auto& c : cands) {
      Hypothesis h = live[c.parent].hyp;
      h.logprob = c.logprob;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      h.attention.push_back(c.attention);
      if (t + 1 == options.max_len) {
        finished.push_back(std::move(h));
        continue;
      }
      next.push_back({std::move(h), c.token, steps[c.parent].state});
    }
    live = std::move(next);
  }
  std::stable_sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.score() > b.score();
  });
  return finished;
}

std::vector<std::string> unk_replace(const Hypothesis& hyp, const Vocabulary& target_vocab,
                                     const std::vector<std::string>& source_tokens,
                                     const TTable* dictionary) {
  std::vector<std::string> out;
  out.reserve(hyp.tokens.size());
  for (std::size_t t = 0; t < hyp.tokens.size(); ++t) {
    const int id = hyp.tokens[t];
    if (id != Vocabulary::kUnk || t >= hyp.attention.size()) {
      out.push_back(target_vocab.type(id));
      continue;
    }
    const int pos = hyp.attention[t];
    if (pos < 0 || pos >= static_cast<int>(source_tokens.size())) {
      out.push_back(target_vocab.type(id));
      continue;
    }
    const auto& src = source_tokens[pos];
    const std::string* tr = dictionary ? dictionary->best(src) : nullptr;
    out.push_back(tr ? *tr : src);
  }
  return out;
}

template class Ensemble<float>;
template class Ensemble<double>;
template std::vector<Hypothesis> beam_search<float>(const Ensemble<float>&, std::span<const int>,
                                                    const BeamOptions&);
template std::vector<Hypothesis> beam_search<double>(const Ensemble<double>&,
                                                     std::span<const int>, const BeamOptions&);

}  // namespace xfer

#include "xfer/rescorer.hpp"

#include <cmath>
#include <sstream>

#include "xfer/bleu.hpp"
#include "xfer/decoder.hpp"
#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto at = line.find("|||", start);
    if (at == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, at - start));
    start = at + 3;
  }
}

double parse_number(const std::string& s, const std::string& where, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::logic_error&) {
  }
  throw DataError(where + "malformed " + what + " '" + s + "'");
}

std::string format_real(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

NBestList NBestList::parse(const std::string& text, const std::string& origin) {
  std::map<int, NBestSentence> by_id;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split_whitespace(line).empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto fields = split_fields(line);
    if (fields.size() != 4)
      throw DataError(where + "expected 4 '|||'-separated fields, found " +
                      std::to_string(fields.size()));
    const auto id_tok = split_whitespace(fields[0]);
    if (id_tok.size() != 1) throw DataError(where + "malformed sentence id");
    const double id = parse_number(id_tok[0], where, "sentence id");
    if (id < 0 || id != std::floor(id) || id > 1e9)
      throw DataError(where + "malformed sentence id '" + id_tok[0] + "'");

    NBestEntry e;
    e.tokens = split_whitespace(fields[1]);
    for (const auto& kv : split_whitespace(fields[2])) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw DataError(where + "malformed feature '" + kv + "', expected name=value");
      const auto name = kv.substr(0, eq);
      if (name == kExternalFeature)
        throw DataError(where + "feature name '" + name + "' is reserved for the total");
      e.features[name] = parse_number(kv.substr(eq + 1), where, "feature value");
    }
    const auto total_tok = split_whitespace(fields[3]);
    if (total_tok.size() != 1) throw DataError(where + "malformed total");
    e.total = parse_number(total_tok[0], where, "total");
    e.features[kExternalFeature] = e.total;

    auto& sentence = by_id[static_cast<int>(id)];
    sentence.id = static_cast<int>(id);
    e.origin_rank = static_cast<int>(sentence.entries.size()) + 1;
    sentence.entries.push_back(std::move(e));
  }
  NBestList out;
  for (auto& [id, s] : by_id) out.sentences.push_back(std::move(s));
  return out;
}

NBestList NBestList::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::string NBestList::to_string() const {
  std::ostringstream out;
  for (const auto& s : sentences)
    for (const auto& e : s.entries) {
      out << s.id << " ||| " << join(e.tokens) << " |||";
      for (const auto& [name, v] : e.features)
        if (name != kExternalFeature) out << ' ' << name << '=' << format_real(v);
      out << " ||| " << format_real(e.total) << '\n';
    }
  return out.str();
}

void NBestList::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_string());
}

void add_feature(NBestList& nbest, const std::vector<std::vector<std::string>>& sources,
                 const Seq2Seq<float>& model, const std::string& name) {
  if (name == kExternalFeature) throw UsageError("add_feature: '" + name + "' is reserved");
  const Ensemble<float> scorer({&model});
  for (auto& s : nbest.sentences) {
    if (s.id < 0 || static_cast<std::size_t>(s.id) >= sources.size())
      throw DataError("add_feature: n-best sentence " + std::to_string(s.id) +
                      " has no source line (" + std::to_string(sources.size()) + " given)");
    const auto src = model.source_vocab().encode(sources[s.id]);
    for (auto& e : s.entries) {
      const auto hyp = model.target_vocab().encode(e.tokens);
      e.features[name] = scorer.sequence_logprob(src, hyp) / double(hyp.size() + 1);
    }
  }
}

void add_feature(NBestList& nbest, const LanguageModel<float>& lm, const std::string& name) {
  if (name == kExternalFeature) throw UsageError("add_feature: '" + name + "' is reserved");
  for (auto& s : nbest.sentences)
    for (auto& e : s.entries) {
      const auto hyp = lm.vocab().encode(e.tokens);
      const double lp = hyp.empty() ? std::log(lm.next_distribution({})[Vocabulary::kEos])
                                    : lm_score(lm, hyp, {}, true);
      e.features[name] = lp / double(hyp.size() + 1);
    }
}

std::vector<std::vector<double>> simplex_grid(std::size_t dims, double step) {
  if (dims == 0) throw UsageError("simplex_grid: no features");
  if (!(step > 0 && step <= 1)) throw UsageError("simplex_grid: step must lie in (0, 1]");
  const long n = std::lround(1.0 / step);
  if (std::abs(double(n) * step - 1.0) > 1e-9)
    throw UsageError("simplex_grid: 1 / step must be an integer");
  std::vector<std::vector<double>> out;
  std::vector<long> parts(dims, 0);
  // Recursive enumeration, first coordinate descending.
  auto rec = [&](auto&& self, std::size_t i, long left) -> void {
    if (i + 1 == dims) {
      parts[i] = left;
      std::vector<double> w(dims);
      for (std::size_t k = 0; k < dims; ++k) w[k] = double(parts[k]) / double(n);
      out.push_back(std::move(w));
      return;
    }
    for (long v = left; v >= 0; --v) {
      parts[i] = v;
      self(self, i + 1, left - v);
    }
  };
  rec(rec, 0, n);
  return out;
}

std::vector<const NBestEntry*> rerank(const NBestList& nbest, const Weights& weights) {
  std::vector<const NBestEntry*> out;
  out.reserve(nbest.sentences.size());
  for (const auto& s : nbest.sentences) {
    const NBestEntry* best = nullptr;
    double best_score = 0;
    for (const auto& e : s.entries) {
      double score = 0;
      for (const auto& [name, w] : weights) {
        auto it = e.features.find(name);
        if (it == e.features.end())
          throw DataError("rerank: sentence " + std::to_string(s.id) + " entry " +
                          std::to_string(e.origin_rank) + " lacks feature '" + name + "'");
        score += w * it->second;
      }
      if (!best || score > best_score || (score == best_score && e.origin_rank < best->origin_rank)) {
        best = &e;
        best_score = score;
      }
    }
    out.push_back(best);
  }
  return out;
}

TuneResult tune_weights(const NBestList& nbest,
                        const std::vector<std::vector<std::string>>& references,
                        const std::vector<std::string>& feature_names,
                        const std::vector<std::vector<double>>& grid) {
  if (grid.empty()) throw UsageError("tune_weights: empty weight grid");
  if (feature_names.empty()) throw UsageError("tune_weights: no features");
  for (const auto& s : nbest.sentences)
    if (static_cast<std::size_t>(s.id) >= references.size())
      throw DataError("tune_weights: n-best sentence " + std::to_string(s.id) +
                      " has no reference (" + std::to_string(references.size()) + " given)");
  int external = -1;
  for (std::size_t k = 0; k < feature_names.size(); ++k)
    if (feature_names[k] == kExternalFeature) external = static_cast<int>(k);

  TuneResult best;
  double best_external = -1;
  bool have = false;
  for (const auto& point : grid) {
    if (point.size() != feature_names.size())
      throw UsageError("tune_weights: grid point has " + std::to_string(point.size()) +
                       " weights for " + std::to_string(feature_names.size()) + " features");
    Weights w;
    for (std::size_t k = 0; k < point.size(); ++k) w[feature_names[k]] = point[k];
    const auto picks = rerank(nbest, w);
    std::vector<std::vector<std::string>> hyps(references.size());
    for (std::size_t i = 0; i < picks.size(); ++i)
      if (picks[i]) hyps[nbest.sentences[i].id] = picks[i]->tokens;
    const double score = bleu(hyps, references);
    const double ext = external >= 0 ? point[external] : 0;
    if (!have || score > best.bleu || (score == best.bleu && ext > best_external)) {
      best.weights = std::move(w);
      best.bleu = score;
      best_external = ext;
      have = true;
    }
  }
  return best;
}

Weights parse_weights(const std::string& text, const std::string& origin) {
  Weights out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_whitespace(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const std::string joined = join(toks, "");
    const auto eq = joined.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError(where + "expected name=weight");
    out[joined.substr(0, eq)] = parse_number(joined.substr(eq + 1), where, "weight");
  }
  if (out.empty()) throw DataError(origin + ": no weights");
  return out;
}

Weights load_weights(const std::filesystem::path& path) {
  return parse_weights(read_file(path), path.string());
}

std::string weights_to_string(const Weights& weights) {
  std::string out;
  for (const auto& [name, w] : weights) out += name + "=" + format_real(w) + "\n";
  return out;
}

void save_weights(const std::filesystem::path& path, const Weights& weights) {
  write_file_atomic(path, weights_to_string(weights));
}

}  // namespace xfer

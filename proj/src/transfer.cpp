#include "xfer/transfer.hpp"

#include <cmath>
#include <sstream>

#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

void TTable::set(const std::string& source, const std::string& target, double p) {
  if (!(p > 0 && p <= 1))
    throw DataError("t-table: probability " + std::to_string(p) + " for '" + source + "' -> '" +
                    target + "' outside (0, 1]");
  rows_[source][target] = p;
}

double TTable::get(const std::string& source, const std::string& target) const {
  auto it = rows_.find(source);
  if (it == rows_.end()) return 0;
  auto jt = it->second.find(target);
  return jt == it->second.end() ? 0 : jt->second;
}

const TTable::Row* TTable::row(const std::string& source) const {
  auto it = rows_.find(source);
  return it == rows_.end() ? nullptr : &it->second;
}

std::size_t TTable::entries() const {
  std::size_t n = 0;
  for (const auto& [s, r] : rows_) n += r.size();
  return n;
}

const std::string* TTable::best(const std::string& source) const {
  const Row* r = row(source);
  if (!r || r->empty()) return nullptr;
  const std::string* out = nullptr;
  double p = -1;
  for (const auto& [t, q] : *r)  // map order: first of equals is the smaller type
    if (q > p) {
      p = q;
      out = &t;
    }
  return out;
}

void TTable::validate() const {
  for (const auto& [s, r] : rows_) {
    double sum = 0;
    for (const auto& [t, p] : r) sum += p;
    if (sum > 1 + 1e-3)
      throw DataError("t-table: probabilities for '" + s + "' sum to " + std::to_string(sum));
  }
}

TTable TTable::parse(const std::string& text, const std::string& origin) {
  TTable out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_whitespace(line);
    if (f.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    if (f.size() != 3) throw DataError(where() + "expected 'source target probability'");
    double p = 0;
    try {
      std::size_t used = 0;
      p = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw DataError(where() + "malformed probability '" + f[2] + "'");
    }
    try {
      out.set(f[0], f[1], p);
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
  }
  out.validate();
  return out;
}

TTable TTable::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::string TTable::to_string() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [s, r] : rows_)
    for (const auto& [t, p] : r) out << s << ' ' << t << ' ' << p << '\n';
  return out.str();
}

void TTable::save(const std::filesystem::path& path) const { write_file_atomic(path, to_string()); }

TTable compose_ttables(const TTable& child_to_pivot, const TTable& pivot_to_parent) {
  TTable out;
  for (const auto& [child, pivots] : child_to_pivot.rows()) {
    std::map<std::string, double> acc;
    for (const auto& [pivot, p] : pivots)
      if (const auto* r = pivot_to_parent.row(pivot))
        for (const auto& [parent, q] : *r) acc[parent] += p * q;
    for (const auto& [parent, p] : acc)
      if (p >= kTTablePruneThreshold) out.set(child, parent, std::min(p, 1.0));
  }
  return out;
}

AssignmentMap identity_assignment(int vocab_size) {
  AssignmentMap a(vocab_size);
  for (int i = 0; i < vocab_size; ++i) a[i] = i;
  return a;
}

AssignmentMap random_assignment(int child_vocab_size, int parent_vocab_size, std::uint64_t seed) {
  if (parent_vocab_size < 1) throw UsageError("random_assignment: empty parent vocabulary");
  Rng rng(seed);
  std::uniform_int_distribution<int> row(0, parent_vocab_size - 1);
  AssignmentMap a(child_vocab_size);
  for (auto& r : a) r = row(rng);
  return a;
}

AssignmentMap dictionary_assignment(const TTable& composed, const Vocabulary& child_source,
                                    const Vocabulary& parent_source, std::uint64_t seed) {
  auto a = random_assignment(child_source.size(), parent_source.size(), seed);
  for (int i = 0; i < child_source.size(); ++i) {
    const auto* r = composed.row(child_source.type(i));
    if (!r) continue;
    int best = -1;
    double p = -1;
    for (const auto& [type, q] : *r) {
      if (!parent_source.contains(type)) continue;
      const int id = parent_source.id(type);
      if (q > p || (q == p && id < best)) {
        p = q;
        best = id;
      }
    }
    if (best >= 0) a[i] = best;
  }
  return a;
}

template <typename T>
Seq2Seq<T> transfer_init(const Seq2Seq<T>& parent, const Vocabulary& child_source,
                         const Vocabulary& child_target, const AssignmentMap& assignment,
                         const TransferOptions& options) {
  const auto& pc = parent.config();
  if (options.hidden_size != 0 && options.hidden_size != pc.hidden_size)
    throw DataError("transfer_init: child hidden size " + std::to_string(options.hidden_size) +
                    " differs from parent hidden size " + std::to_string(pc.hidden_size));
  if (static_cast<int>(assignment.size()) != child_source.size())
    throw DataError("transfer_init: assignment covers " + std::to_string(assignment.size()) +
                    " types, child source vocabulary has " +
                    std::to_string(child_source.size()));
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] < 0 || assignment[i] >= pc.src_vocab_size)
      throw DataError("transfer_init: assignment of child id " + std::to_string(i) +
                      " points outside the parent embedding table");

  ModelConfig c = pc;
  c.src_vocab_size = child_source.size();
  c.tgt_vocab_size = child_target.size();
  c.parent = options.parent.empty() ? "unnamed" : options.parent;

  const auto& pp = parent.params();
  ParameterBlocks<T> p = pp;
  const int d = pc.hidden_size;

  p.source_embeddings.resize(c.src_vocab_size, d);
  for (int i = 0; i < c.src_vocab_size; ++i)
    p.source_embeddings.row(i) = pp.source_embeddings.row(assignment[i]);

  Rng rng(options.seed);
  p.target_input_embeddings.resize(c.tgt_vocab_size, d);
  p.target_output_embeddings.resize(d, c.tgt_vocab_size);
  p.target_output_bias.resize(c.tgt_vocab_size, 1);
  const auto& pv = parent.target_vocab();
  for (int i = 0; i < c.tgt_vocab_size; ++i) {
    const auto& type = child_target.type(i);
    if (pv.contains(type)) {
      const int j = pv.id(type);
      p.target_input_embeddings.row(i) = pp.target_input_embeddings.row(j);
      p.target_output_embeddings.col(i) = pp.target_output_embeddings.col(j);
      p.target_output_bias(i, 0) = pp.target_output_bias(j, 0);
    } else {
      Matrix<T> in(1, d), out(d, 1), bias(1, 1);
      fill_uniform(in, pc.init_range, rng);
      fill_uniform(out, pc.init_range, rng);
      fill_uniform(bias, pc.init_range, rng);
      p.target_input_embeddings.row(i) = in;
      p.target_output_embeddings.col(i) = out;
      p.target_output_bias(i, 0) = bias(0, 0);
    }
  }
  return Seq2Seq<T>(c, child_source, child_target, std::move(p));
}

template <typename T>
void l2_toward_parent(ParameterBlocks<T>& grads, const ParameterBlocks<T>& params,
                      const ParameterBlocks<T>& parent, T lambda, const FreezeMask& mask) {
  if (lambda < 0) throw UsageError("l2_toward_parent: lambda must be non-negative");
  if (lambda == 0) return;
  for (Block b : kAllBlocks) {
    if (mask.frozen(b)) continue;
    auto g = grads.tensors(b);
    auto t = params.tensors(b);
    auto a = parent.tensors(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (t[i]->rows() != a[i]->rows() || t[i]->cols() != a[i]->cols())
        throw DimensionError("l2_toward_parent", std::string(block_name(b)), t[i]->rows(),
                             t[i]->cols(), a[i]->rows(), a[i]->cols());
      *g[i] += lambda * (*t[i] - *a[i]);
    }
  }
}

template <typename T>
Seq2Seq<T> lm_as_parent(const LanguageModel<T>& lm, Seq2Seq<T> skeleton,
                        LmTransferReport* report) {
  const int d = skeleton.config().hidden_size;
  if (lm.config().hidden_size != d)
    throw DataError("lm_as_parent: LM hidden size " + std::to_string(lm.config().hidden_size) +
                    " differs from child hidden size " + std::to_string(d));
  const auto& lp = lm.params();
  auto& p = skeleton.params();

  auto& l0 = p.target_rnn[0];
  l0.input.leftCols(d) = lp.target_rnn[0].input;
  l0.input.rightCols(d).setZero();
  l0.recurrent = lp.target_rnn[0].recurrent;
  l0.bias = lp.target_rnn[0].bias;
  p.target_rnn[1] = lp.target_rnn[1];
  p.target_attention.combine.rightCols(d) = lp.target_attention.combine;

  LmTransferReport local;
  const auto& cv = skeleton.target_vocab();
  const auto& lv = lm.vocab();
  for (int j = 0; j < lv.size(); ++j) {
    const auto& type = lv.type(j);
    if (!cv.contains(type)) {
      local.dropped.push_back(type);
      continue;
    }
    const int i = cv.id(type);
    p.target_input_embeddings.row(i) = lp.target_input_embeddings.row(j);
    p.target_output_embeddings.col(i) = lp.target_output_embeddings.col(j);
    p.target_output_bias(i, 0) = lp.target_output_bias(j, 0);
    ++local.copied;
  }
  if (report) *report = std::move(local);
  return skeleton;
}

#define XFER_INSTANTIATE(T)                                                                    \
  template Seq2Seq<T> transfer_init<T>(const Seq2Seq<T>&, const Vocabulary&, const Vocabulary&, \
                                       const AssignmentMap&, const TransferOptions&);           \
  template void l2_toward_parent<T>(ParameterBlocks<T>&, const ParameterBlocks<T>&,            \
                                    const ParameterBlocks<T>&, T, const FreezeMask&);           \
  template Seq2Seq<T> lm_as_parent<T>(const LanguageModel<T>&, Seq2Seq<T>, LmTransferReport*);

XFER_INSTANTIATE(float)
XFER_INSTANTIATE(double)

#undef XFER_INSTANTIATE

}  // namespace xfer

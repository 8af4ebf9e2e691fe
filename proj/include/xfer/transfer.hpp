#pragma once

// Parent-to-child initialisation: copy a trained parent, remap the source
// embeddings onto child types, and optionally pull child weights toward the
// parent during training.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xfer/lm.hpp"
#include "xfer/params.hpp"
#include "xfer/seq2seq.hpp"
#include "xfer/vocab.hpp"

namespace xfer {

/// Child source id -> parent source embedding row, total over the child vocabulary.
using AssignmentMap = std::vector<int>;

/// Sparse P(target type | source type).
class TTable {
 public:
  using Row = std::map<std::string, double>;

  /// Overwrites any existing entry. Probabilities must lie in (0, 1].
  void set(const std::string& source, const std::string& target, double p);
  double get(const std::string& source, const std::string& target) const;  // 0 when absent
  const Row* row(const std::string& source) const;
  const std::map<std::string, Row>& rows() const { return rows_; }
  std::size_t entries() const;
  bool empty() const { return rows_.empty(); }

  /// Highest-probability translation; ties go to the lexicographically
  /// smaller type. Null when the source type has no row.
  const std::string* best(const std::string& source) const;

  /// Throws DataError when a row sums above 1 + 1e-3.
  void validate() const;

  /// One "source target probability" entry per line.
  static TTable parse(const std::string& text, const std::string& origin = "<memory>");
  static TTable load(const std::filesystem::path& path);
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, Row> rows_;
};

inline constexpr double kTTablePruneThreshold = 1e-6;

/// P(parent | child) = sum over pivots of P(pivot | child) P(parent | pivot),
/// dropping entries below the prune threshold.
TTable compose_ttables(const TTable& child_to_pivot, const TTable& pivot_to_parent);

AssignmentMap identity_assignment(int vocab_size);

/// Every child id (reserved ids included) drawn independently and uniformly
/// from the parent rows.
AssignmentMap random_assignment(int child_vocab_size, int parent_vocab_size, std::uint64_t seed);

/// Each child type goes to the parent row of its most probable translation,
/// ties to the lower parent id. Types without a usable entry keep the
/// random_assignment row drawn from the same seed.
AssignmentMap dictionary_assignment(const TTable& composed, const Vocabulary& child_source,
                                    const Vocabulary& parent_source, std::uint64_t seed);

struct TransferOptions {
  int hidden_size = 0;    // expected child hidden size; 0 accepts the parent's
  std::string parent;     // provenance recorded in the child config
  std::uint64_t seed = 1; // fresh rows for target types the parent lacks
};

/// Copies every non-embedding block from the parent, fills child source
/// embedding row i from parent row assignment[i], and copies target rows by
/// type name (unmatched types are drawn fresh).
template <typename T>
Seq2Seq<T> transfer_init(const Seq2Seq<T>& parent, const Vocabulary& child_source,
                         const Vocabulary& child_target, const AssignmentMap& assignment,
                         const TransferOptions& options = {});

/// grad += lambda * (theta - theta_parent) on every trainable block.
template <typename T>
void l2_toward_parent(ParameterBlocks<T>& grads, const ParameterBlocks<T>& params,
                      const ParameterBlocks<T>& parent, T lambda, const FreezeMask& mask);

struct LmTransferReport {
  std::vector<std::string> dropped;  // LM types absent from the child target vocabulary
  int copied = 0;                    // child target types initialised from the LM
};

/// Maps a language model onto the decoder of a freshly initialised child.
/// The LM layer-0 input weights fill the embedding columns of the decoder's
/// layer-0 input weights and the feed-input columns are zeroed; layer 1 is
/// copied whole; the LM projection fills the h-half of the attentional
/// combiner. Embedding rows move by type name. Source blocks, the position
/// network and the context half of the combiner keep the skeleton's values.
template <typename T>
Seq2Seq<T> lm_as_parent(const LanguageModel<T>& lm, Seq2Seq<T> skeleton,
                        LmTransferReport* report = nullptr);

}  // namespace xfer

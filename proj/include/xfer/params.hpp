#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xfer/tensor.hpp"

namespace xfer {

/// The six named parameter groups of the translation model.
enum class Block {
  SourceEmbeddings,
  SourceRnn,
  TargetRnn,
  TargetAttention,
  TargetInputEmbeddings,
  TargetOutputEmbeddings,
};

inline constexpr std::array<Block, 6> kAllBlocks = {
    Block::SourceEmbeddings,      Block::SourceRnn,
    Block::TargetRnn,             Block::TargetAttention,
    Block::TargetInputEmbeddings, Block::TargetOutputEmbeddings,
};

std::string_view block_name(Block b);
std::optional<Block> parse_block(std::string_view name);
std::string valid_block_names();

/// Position network (W_p, v_p) and the attentional-vector combiner W_c.
template <typename T>
struct AttentionWeights {
  Matrix<T> position_hidden;  // d x d
  Matrix<T> position_out;     // 1 x d
  Matrix<T> combine;          // d x 2d, acting on [context; h]
};

template <typename T>
struct ParameterBlocks {
  Matrix<T> source_embeddings;  // |V_src| x d
  std::array<LstmWeights<T>, 2> source_rnn;
  std::array<LstmWeights<T>, 2> target_rnn;  // layer 0 reads [embedding; feed-input]
  AttentionWeights<T> target_attention;
  Matrix<T> target_input_embeddings;   // |V_tgt| x d
  Matrix<T> target_output_embeddings;  // d x |V_tgt|
  Matrix<T> target_output_bias;        // |V_tgt| x 1

  std::vector<Matrix<T>*> tensors(Block b);
  std::vector<const Matrix<T>*> tensors(Block b) const;
  std::vector<Matrix<T>*> all_tensors();
  std::vector<const Matrix<T>*> all_tensors() const;

  ParameterBlocks zeros_like() const;
  void set_zero();

  template <typename U>
  ParameterBlocks<U> cast() const;
};

struct ModelConfig {
  int hidden_size = 1000;
  int layers = 2;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  double dropout_p = 0.2;
  double init_range = 0.08;
  int attention_window = 10;
  // Empty unless the model was initialised from a parent.
  std::string parent;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-block trainability; true means the block receives no updates.
class FreezeMask {
 public:
  FreezeMask() { frozen_.fill(false); }

  static FreezeMask none() { return {}; }
  static FreezeMask all();
  /// Target input and output embeddings frozen, everything else trained.
  static FreezeMask child_default();
  /// Comma-separated block names; throws UsageError listing the valid names.
  static FreezeMask parse(std::string_view list);

  bool frozen(Block b) const { return frozen_[static_cast<std::size_t>(b)]; }
  FreezeMask& set(Block b, bool frozen = true) {
    frozen_[static_cast<std::size_t>(b)] = frozen;
    return *this;
  }
  bool all_frozen() const;
  std::string to_string() const;
  bool operator==(const FreezeMask&) const = default;

 private:
  std::array<bool, 6> frozen_;
};

template <typename T>
ParameterBlocks<T> allocate_params(const ModelConfig& config);

/// Every entry drawn uniformly from [-init_range, +init_range], blocks visited
/// in canonical order.
template <typename T>
ParameterBlocks<T> init_params(const ModelConfig& config, Rng& rng);

/// theta <- theta - lr * grad on every trainable block; frozen blocks are not
/// touched.
template <typename T>
void sgd_step(ParameterBlocks<T>& params, const ParameterBlocks<T>& grads, T lr,
              const FreezeMask& mask);

template <typename T>
bool bitwise_equal(const Matrix<T>& a, const Matrix<T>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::equal(a.data(), a.data() + a.size(), b.data()));
}

template <typename T>
bool bitwise_equal(const ParameterBlocks<T>& a, const ParameterBlocks<T>& b, Block block);

template <typename T>
bool bitwise_equal(const ParameterBlocks<T>& a, const ParameterBlocks<T>& b);

}  // namespace xfer

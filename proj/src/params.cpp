#include "xfer/params.hpp"

#include "xfer/error.hpp"

namespace xfer {

namespace {

constexpr std::array<std::string_view, 6> kBlockNames = {
    "source_embeddings",       "source_rnn", "target_rnn", "target_attention",
    "target_input_embeddings", "target_output_embeddings",
};

template <typename T, typename P>
std::vector<P> collect(auto& self, Block b) {
  std::vector<P> out;
  switch (b) {
    case Block::SourceEmbeddings:
      out = {&self.source_embeddings};
      break;
    case Block::SourceRnn:
    case Block::TargetRnn: {
      auto& layers = b == Block::SourceRnn ? self.source_rnn : self.target_rnn;
      for (auto& l : layers) {
        out.push_back(&l.input);
        out.push_back(&l.recurrent);
        out.push_back(&l.bias);
      }
      break;
    }
    case Block::TargetAttention:
      out = {&self.target_attention.position_hidden, &self.target_attention.position_out,
             &self.target_attention.combine};
      break;
    case Block::TargetInputEmbeddings:
      out = {&self.target_input_embeddings};
      break;
    case Block::TargetOutputEmbeddings:
      out = {&self.target_output_embeddings, &self.target_output_bias};
      break;
  }
  return out;
}

}  // namespace

std::string_view block_name(Block b) { return kBlockNames[static_cast<std::size_t>(b)]; }

std::optional<Block> parse_block(std::string_view name) {
  for (Block b : kAllBlocks)
    if (block_name(b) == name) return b;
  return std::nullopt;
}

std::string valid_block_names() {
  std::string out;
  for (Block b : kAllBlocks) {
    if (!out.empty()) out += ", ";
    out += block_name(b);
  }
  return out;
}

template <typename T>
std::vector<Matrix<T>*> ParameterBlocks<T>::tensors(Block b) {
  return collect<T, Matrix<T>*>(*this, b);
}

template <typename T>
std::vector<const Matrix<T>*> ParameterBlocks<T>::tensors(Block b) const {
  return collect<T, const Matrix<T>*>(*this, b);
}

template <typename T>
std::vector<Matrix<T>*> ParameterBlocks<T>::all_tensors() {
  std::vector<Matrix<T>*> out;
  for (Block b : kAllBlocks)
    for (auto* m : tensors(b)) out.push_back(m);
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> ParameterBlocks<T>::all_tensors() const {
  std::vector<const Matrix<T>*> out;
  for (Block b : kAllBlocks)
    for (const auto* m : tensors(b)) out.push_back(m);
  return out;
}

template <typename T>
ParameterBlocks<T> ParameterBlocks<T>::zeros_like() const {
  ParameterBlocks<T> out = *this;
  out.set_zero();
  return out;
}

template <typename T>
void ParameterBlocks<T>::set_zero() {
  for (auto* m : all_tensors()) m->setZero();
}

template <typename T>
template <typename U>
ParameterBlocks<U> ParameterBlocks<T>::cast() const {
  ParameterBlocks<U> out;
  auto dst = out.all_tensors();
  auto src = all_tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

void ModelConfig::validate() const {
  if (layers != 2) throw UsageError("model: layers must be 2");
  if (hidden_size < 1) throw UsageError("model: hidden_size must be positive");
  if (init_range < 0) throw UsageError("model: init_range must be non-negative");
  if (attention_window < 1) throw UsageError("model: attention_window must be >= 1");
  if (dropout_p < 0 || dropout_p >= 1) throw UsageError("model: dropout_p must lie in [0, 1)");
  if (src_vocab_size < 4 || tgt_vocab_size < 4)
    throw UsageError("model: vocabularies must hold at least the 4 reserved types");
}

FreezeMask FreezeMask::all() {
  FreezeMask m;
  m.frozen_.fill(true);
  return m;
}

FreezeMask FreezeMask::child_default() {
  FreezeMask m;
  m.set(Block::TargetInputEmbeddings).set(Block::TargetOutputEmbeddings);
  return m;
}

FreezeMask FreezeMask::parse(std::string_view list) {
  FreezeMask m;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = list.find(',', pos);
    const auto item = list.substr(pos, comma == std::string_view::npos ? list.npos : comma - pos);
    if (!item.empty()) {
      if (item == "all") {
        m = all();
      } else if (auto b = parse_block(item)) {
        m.set(*b);
      } else {
        throw UsageError("unknown block '" + std::string(item) +
                         "'; valid names: " + valid_block_names());
      }
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return m;
}

bool FreezeMask::all_frozen() const {
  for (bool f : frozen_)
    if (!f) return false;
  return true;
}

std::string FreezeMask::to_string() const {
  std::string out;
  for (Block b : kAllBlocks) {
    if (!frozen(b)) continue;
    if (!out.empty()) out += ",";
    out += block_name(b);
  }
  return out;
}

template <typename T>
ParameterBlocks<T> allocate_params(const ModelConfig& c) {
  c.validate();
  const int d = c.hidden_size;
  ParameterBlocks<T> p;
  p.source_embeddings.setZero(c.src_vocab_size, d);
  for (int l = 0; l < 2; ++l) {
    p.source_rnn[l] = {Matrix<T>::Zero(4 * d, d), Matrix<T>::Zero(4 * d, d),
                       Matrix<T>::Zero(4 * d, 1)};
    p.target_rnn[l] = {Matrix<T>::Zero(4 * d, l == 0 ? 2 * d : d), Matrix<T>::Zero(4 * d, d),
                       Matrix<T>::Zero(4 * d, 1)};
  }
  p.target_attention.position_hidden.setZero(d, d);
  p.target_attention.position_out.setZero(1, d);
  p.target_attention.combine.setZero(d, 2 * d);
  p.target_input_embeddings.setZero(c.tgt_vocab_size, d);
  p.target_output_embeddings.setZero(d, c.tgt_vocab_size);
  p.target_output_bias.setZero(c.tgt_vocab_size, 1);
  return p;
}

template <typename T>
ParameterBlocks<T> init_params(const ModelConfig& config, Rng& rng) {
  auto p = allocate_params<T>(config);
  for (auto* m : p.all_tensors()) fill_uniform(*m, config.init_range, rng);
  return p;
}

template <typename T>
void sgd_step(ParameterBlocks<T>& params, const ParameterBlocks<T>& grads, T lr,
              const FreezeMask& mask) {
  for (Block b : kAllBlocks) {
    auto ps = params.tensors(b);
    auto gs = grads.tensors(b);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i]->rows() != gs[i]->rows() || ps[i]->cols() != gs[i]->cols())
        throw DimensionError("sgd_step", std::string(block_name(b)), ps[i]->rows(),
                             ps[i]->cols(), gs[i]->rows(), gs[i]->cols());
    }
    if (mask.frozen(b) || lr == T(0)) continue;
    for (std::size_t i = 0; i < ps.size(); ++i) *ps[i] -= lr * *gs[i];
  }
}

template <typename T>
bool bitwise_equal(const ParameterBlocks<T>& a, const ParameterBlocks<T>& b, Block block) {
  auto ta = a.tensors(block);
  auto tb = b.tensors(block);
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!bitwise_equal(*ta[i], *tb[i])) return false;
  return true;
}

template <typename T>
bool bitwise_equal(const ParameterBlocks<T>& a, const ParameterBlocks<T>& b) {
  for (Block block : kAllBlocks)
    if (!bitwise_equal(a, b, block)) return false;
  return true;
}

template struct ParameterBlocks<float>;
template struct ParameterBlocks<double>;
template ParameterBlocks<double> ParameterBlocks<float>::cast<double>() const;
template ParameterBlocks<float> ParameterBlocks<double>::cast<float>() const;
template ParameterBlocks<float> allocate_params<float>(const ModelConfig&);
template ParameterBlocks<double> allocate_params<double>(const ModelConfig&);
template ParameterBlocks<float> init_params<float>(const ModelConfig&, Rng&);
template ParameterBlocks<double> init_params<double>(const ModelConfig&, Rng&);
template void sgd_step<float>(ParameterBlocks<float>&, const ParameterBlocks<float>&, float,
                              const FreezeMask&);
template void sgd_step<double>(ParameterBlocks<double>&, const ParameterBlocks<double>&, double,
                               const FreezeMask&);
template bool bitwise_equal<float>(const ParameterBlocks<float>&, const ParameterBlocks<float>&,
                                   Block);
template bool bitwise_equal<double>(const ParameterBlocks<double>&,
                                    const ParameterBlocks<double>&, Block);
template bool bitwise_equal<float>(const ParameterBlocks<float>&, const ParameterBlocks<float>&);
template bool bitwise_equal<double>(const ParameterBlocks<double>&,
                                    const ParameterBlocks<double>&);

}  // namespace xfer

#include "xfer/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <sstream>

#include "xfer/io.hpp"

namespace xfer {

namespace {

constexpr char kMagic[8] = {'X', 'F', 'E', 'R', 'M', 'D', 'L', '\0'};

std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(std::string_view s) { out_ += s; }
  std::size_t size() const { return out_.size(); }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u32();
    return std::string(raw(n));
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }
  std::string_view data() const { return data_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw TruncatedFileError(origin_ + ": truncated model file (needed " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ")");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::string encode_meta(const ModelFile& f) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(f.header.size()));
  for (const auto& [k, v] : f.header) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(f.vocabularies.size()));
  for (const auto& [name, vocab] : f.vocabularies) {
    w.str(name);
    const auto types = vocab.user_types();
    w.u32(static_cast<std::uint32_t>(types.size()));
    for (const auto& t : types) w.str(t);
  }
  return w.bytes();
}

void decode_meta(std::string_view bytes, ModelFile& f, const std::string& origin) {
  Reader r(bytes, origin);
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto k = r.str();
    f.header[k] = r.str();
  }
  const auto nv = r.u32();
  for (std::uint32_t i = 0; i < nv; ++i) {
    auto name = r.str();
    const auto count = r.u32();
    std::vector<std::string> types;
    types.reserve(count);
    for (std::uint32_t j = 0; j < count; ++j) types.push_back(r.str());
    f.vocabularies.emplace_back(std::move(name), Vocabulary::from_types(types));
  }
}

}  // namespace

const ModelBlock& ModelFile::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw MissingBlockError("model file is missing block '" + name + "'", name);
}

const Vocabulary& ModelFile::vocabulary(const std::string& name) const {
  for (const auto& [n, v] : vocabularies)
    if (n == name) return v;
  throw ModelFormatError("model file is missing vocabulary '" + name + "'");
}

const std::string& ModelFile::header_value(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw ModelFormatError("model file header lacks '" + key + "'");
  return it->second;
}

std::string serialize_model_file(const ModelFile& f) {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u32(f.version);
  const auto meta = encode_meta(f);
  w.u64(meta.size());
  w.raw(meta);
  w.u32(crc32_of(meta.data(), meta.size()));
  w.u32(static_cast<std::uint32_t>(f.blocks.size()));
  for (const auto& b : f.blocks) {
    w.str(b.name);
    Writer body;
    body.u32(static_cast<std::uint32_t>(b.tensors.size()));
    for (const auto& t : b.tensors) {
      body.u32(static_cast<std::uint32_t>(t.rows()));
      body.u32(static_cast<std::uint32_t>(t.cols()));
    }
    Writer payload;
    for (const auto& t : b.tensors)
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j) payload.f32(t(i, j));
    body.u64(payload.size());
    body.raw(payload.bytes());
    w.raw(body.bytes());
    w.u32(crc32_of(body.bytes().data(), body.size()));
  }
  return w.bytes();
}

ModelFile parse_model_file(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    throw ModelFormatError(origin + ": not a model file (bad magic)");
  ModelFile f;
  f.version = r.u32();
  if (f.version != kModelFormatVersion)
    throw VersionMismatchError(origin + ": model format version " + std::to_string(f.version) +
                               ", expected " + std::to_string(kModelFormatVersion));
  const auto meta_len = r.u64();
  const auto meta = r.raw(meta_len);
  if (r.u32() != crc32_of(meta.data(), meta.size()))
    throw ChecksumError(origin + ": checksum mismatch in header section");
  decode_meta(meta, f, origin);

  const auto nblocks = r.u32();
  for (std::uint32_t bi = 0; bi < nblocks; ++bi) {
    ModelBlock b;
    b.name = r.str();
    const auto body_start = r.pos();
    const auto ntensors = r.u32();
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(ntensors);
    std::uint64_t expected = 0;
    for (auto& s : shapes) {
      s.first = r.u32();
      s.second = r.u32();
      expected += 4ull * s.first * s.second;
    }
    const auto payload_len = r.u64();
    const auto payload = r.raw(payload_len);
    const auto body = r.data().substr(body_start, r.pos() - body_start);
    if (r.u32() != crc32_of(body.data(), body.size()))
      throw ChecksumError(origin + ": checksum mismatch in block '" + b.name + "'");
    if (payload_len != expected)
      throw ModelFormatError(origin + ": block '" + b.name + "' payload size disagrees with shapes");
    Reader pr(payload, origin);
    for (const auto& [rows, cols] : shapes) {
      Matrix<float> t(rows, cols);
      for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j) t(i, j) = pr.f32();
      b.tensors.push_back(std::move(t));
    }
    f.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw ModelFormatError(origin + ": trailing bytes after last block");
  return f;
}

void write_model_file(const std::filesystem::path& path, const ModelFile& file) {
  write_file_atomic(path, serialize_model_file(file));
}

ModelFile read_model_file(const std::filesystem::path& path) {
  return parse_model_file(read_file(path), path.string());
}

ModelFile to_model_file(const Seq2Seq<float>& model) {
  const auto& c = model.config();
  ModelFile f;
  f.header["kind"] = "seq2seq";
  f.header["hidden_size"] = std::to_string(c.hidden_size);
  f.header["layers"] = std::to_string(c.layers);
  f.header["src_vocab_size"] = std::to_string(c.src_vocab_size);
  f.header["tgt_vocab_size"] = std::to_string(c.tgt_vocab_size);
  std::ostringstream dp, ir;
  dp.precision(17);
  ir.precision(17);
  dp << c.dropout_p;
  ir << c.init_range;
  f.header["dropout_p"] = dp.str();
  f.header["init_range"] = ir.str();
  f.header["attention_window"] = std::to_string(c.attention_window);
  if (!c.parent.empty()) f.header["parent"] = c.parent;
  f.vocabularies.emplace_back("source", model.source_vocab());
  f.vocabularies.emplace_back("target", model.target_vocab());
  for (Block b : kAllBlocks) {
    ModelBlock mb{std::string(block_name(b)), {}};
    for (const auto* t : model.params().tensors(b)) mb.tensors.push_back(*t);
    f.blocks.push_back(std::move(mb));
  }
  return f;
}

Seq2Seq<float> seq2seq_from_file(const ModelFile& f) {
  if (f.header_value("kind") != "seq2seq")
    throw ModelFormatError("model file holds a '" + f.header_value("kind") +
                           "' model, expected seq2seq");
  ModelConfig c;
  try {
    c.hidden_size = std::stoi(f.header_value("hidden_size"));
    c.layers = std::stoi(f.header_value("layers"));
    c.src_vocab_size = std::stoi(f.header_value("src_vocab_size"));
    c.tgt_vocab_size = std::stoi(f.header_value("tgt_vocab_size"));
    c.dropout_p = std::stod(f.header_value("dropout_p"));
    c.init_range = std::stod(f.header_value("init_range"));
    c.attention_window = std::stoi(f.header_value("attention_window"));
  } catch (const std::logic_error&) {
    throw ModelFormatError("model file header holds a malformed number");
  }
  if (auto it = f.header.find("parent"); it != f.header.end()) c.parent = it->second;

  auto params = allocate_params<float>(c);
  for (Block b : kAllBlocks) {
    const auto& mb = f.block(std::string(block_name(b)));
    auto dst = params.tensors(b);
    if (mb.tensors.size() != dst.size())
      throw ModelFormatError("block '" + mb.name + "' holds " + std::to_string(mb.tensors.size()) +
                             " tensors, expected " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (mb.tensors[i].rows() != dst[i]->rows() || mb.tensors[i].cols() != dst[i]->cols())
        throw ModelFormatError("block '" + mb.name + "' tensor " + std::to_string(i) +
                               " has the wrong shape");
      *dst[i] = mb.tensors[i];
    }
  }
  return Seq2Seq<float>(c, f.vocabulary("source"), f.vocabulary("target"), std::move(params));
}

void save_model(const Seq2Seq<float>& model, const std::filesystem::path& path) {
  write_model_file(path, to_model_file(model));
}

Seq2Seq<float> load_model(const std::filesystem::path& path) {
  return seq2seq_from_file(read_model_file(path));
}

}  // namespace xfer

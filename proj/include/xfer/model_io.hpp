#pragma once

// Versioned binary model container.
//
//   magic "XFERMDL\0" | u32 version
//   u64 meta length | meta bytes | u32 crc32(meta)
//   u32 block count
//   per block: u32 name length | name | u32 tensor count
//              per tensor: u32 rows | u32 cols
//              u64 payload length | payload | u32 crc32(shapes + payload)
//
// Integers are little-endian; payloads are row-major IEEE-754 binary32.
// The meta section holds "key=value" header lines followed by the named
// vocabularies.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xfer/error.hpp"
#include "xfer/seq2seq.hpp"
#include "xfer/vocab.hpp"

namespace xfer {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFormatError : DataError {
  using DataError::DataError;
};
struct VersionMismatchError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct TruncatedFileError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct ChecksumError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct MissingBlockError : ModelFormatError {
  MissingBlockError(const std::string& what, std::string block)
      : ModelFormatError(what), block_name(std::move(block)) {}
  std::string block_name;
};

struct ModelBlock {
  std::string name;
  std::vector<Matrix<float>> tensors;
};

struct ModelFile {
  std::uint32_t version = kModelFormatVersion;
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Vocabulary>> vocabularies;
  std::vector<ModelBlock> blocks;

  const ModelBlock& block(const std::string& name) const;  // MissingBlockError
  const Vocabulary& vocabulary(const std::string& name) const;
  const std::string& header_value(const std::string& key) const;
};

std::string serialize_model_file(const ModelFile& file);
ModelFile parse_model_file(const std::string& bytes, const std::string& origin = "<memory>");

void write_model_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile read_model_file(const std::filesystem::path& path);

ModelFile to_model_file(const Seq2Seq<float>& model);
Seq2Seq<float> seq2seq_from_file(const ModelFile& file);

void save_model(const Seq2Seq<float>& model, const std::filesystem::path& path);
Seq2Seq<float> load_model(const std::filesystem::path& path);

}  // namespace xfer

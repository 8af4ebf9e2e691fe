#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xfer {

/// Bijection between word types and ids. Ids 0..3 are reserved for
/// <pad>, <unk>, <s> and </s>; every other type follows in insertion order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  /// Frequency-ranked vocabulary (ties broken lexicographically), capped at
  /// `max_types` non-reserved types when positive.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          std::size_t max_types = 0);
  static Vocabulary from_types(const std::vector<std::string>& types);

  /// Adds a type if absent; returns its id.
  int add(const std::string& type);

  int id(std::string_view type) const;  // <unk> for unknown types
  bool contains(std::string_view type) const;
  const std::string& type(int id) const;
  int size() const { return static_cast<int>(types_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  /// Non-reserved types in id order.
  std::vector<std::string> user_types() const;

  /// One non-reserved type per line; line n holds id n + 3.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return types_ == other.types_; }

  static bool is_reserved(int id) { return id >= 0 && id < kReserved; }

 private:
  std::vector<std::string> types_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace xfer

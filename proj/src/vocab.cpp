#include "xfer/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "xfer/error.hpp"
#include "xfer/io.hpp"

namespace xfer {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<s>", "</s>"}) add(t);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences,
                             std::size_t max_types) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, n] : ranked) {
    if (max_types > 0 && static_cast<std::size_t>(v.size() - kReserved) >= max_types) break;
    v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::from_types(const std::vector<std::string>& types) {
  Vocabulary v;
  for (const auto& t : types) v.add(t);
  return v;
}

int Vocabulary::add(const std::string& type) {
  if (auto it = index_.find(type); it != index_.end()) return it->second;
  const int id = static_cast<int>(types_.size());
  types_.push_back(type);
  index_.emplace(type, id);
  return id;
}

int Vocabulary::id(std::string_view type) const {
  auto it = index_.find(std::string(type));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view type) const {
  return index_.count(std::string(type)) > 0;
}

const std::string& Vocabulary::type(int id) const {
  if (id < 0 || id >= size())
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  return types_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(type(i));
  return out;
}

std::vector<std::string> Vocabulary::user_types() const {
  return {types_.begin() + kReserved, types_.end()};
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string text;
  for (int i = kReserved; i < size(); ++i) text += types_[i] + "\n";
  write_file_atomic(path, text);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty type");
    if (v.contains(line))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate type '" +
                      line + "'");
    v.add(line);
  }
  return v;
}

}  // namespace xfer

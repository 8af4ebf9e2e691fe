#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xfer {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<std::string> split_whitespace(std::string_view line);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

std::string lowercase(std::string_view s);

}  // namespace xfer

#pragma once

#include <string>
#include <vector>

namespace hvae::ioutil {

// Writes content to a temp file beside path, then renames into place, so
// readers never observe a partial file. Throws IoError on failure.
void atomic_write_file(const std::string& path, const std::string& content);

// Whole file as one string. Throws IoError if unreadable.
std::string read_file(const std::string& path);

// File split on '\n' (trailing '\r' stripped). Throws IoError if unreadable.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace hvae::ioutil

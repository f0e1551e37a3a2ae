#pragma once

#include <string>

namespace simcse::io {

/// Whole-file read. Throws IoError when the file cannot be opened or read.
std::string read_file(const std::string& path);

/// Whole-file write through a sibling temp file plus rename, so readers never
/// observe a half-written file. Throws IoError.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace simcse::io

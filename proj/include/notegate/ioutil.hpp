#pragma once

#include <string>

namespace notegate {

// Whole-file helpers. Writes go through a temp file in the same directory
// followed by a rename, so readers never observe a half-written file.
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& bytes);

} // namespace notegate

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace curator {

/// Write-temp-then-rename. Readers see either the old file or the complete
/// new one, never a partial write.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace curator

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace curator {

/// RFC 4180 quoting: fields containing a comma, quote or newline are wrapped
/// in quotes with embedded quotes doubled.
std::string csv_field(std::string_view value);

/// Splits CSV text into records. Handles quoted fields, CRLF, and a missing
/// final newline. Empty lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace curator

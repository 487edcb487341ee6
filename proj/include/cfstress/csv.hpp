#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cfstress {

// RFC-4180 dialect: comma separator, double-quote quoting with "" escapes,
// LF or CRLF row ends, UTF-8 passthrough.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// quotes a field only when it contains a comma, quote or newline
std::string csv_field(std::string_view value);

// joins fields with commas, quoting each as needed (no trailing newline)
std::string csv_field_join(const std::vector<std::string>& fields);

}  // namespace cfstress

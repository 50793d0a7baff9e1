#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace qsfusion::csv {

// Splits one CSV record. Handles double-quoted fields with "" escapes; no embedded newlines.
std::vector<std::string> split_line(std::string_view line);

// Quotes a field only when it contains a separator, quote or newline.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

// Shortest round-trip decimal form; "nan" for NaN.
std::string format_double(double v);

}  // namespace qsfusion::csv

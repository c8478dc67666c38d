#pragma once

#include <string>
#include <string_view>

namespace brpatch {

/// Shortest decimal that round-trips to `v`.
std::string fmt_double(double v);

/// Locale-independent "%.*g" rendering, for labels.
std::string fmt_double(double v, int precision);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

} // namespace brpatch

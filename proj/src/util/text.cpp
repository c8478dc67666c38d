#include "brpatch/text.hpp"

#include <charconv>
#include <cstdio>

namespace brpatch {

std::string fmt_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_double(double v, int precision)
{
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return std::string(buf, n > 0 ? static_cast<std::size_t>(n) : 0);
}

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(s);
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

} // namespace brpatch

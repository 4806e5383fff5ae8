#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sdfas {

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Strict parsers: the whole field must be consumed. `what` names the field in
// the DataError message.
long long parse_int(std::string_view s, std::string_view what);
double parse_double(std::string_view s, std::string_view what);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);
std::string format_fixed(double v, int decimals);

}  // namespace sdfas

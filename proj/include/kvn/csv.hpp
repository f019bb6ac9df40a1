#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kvn::csv {

// 17 significant digits: doubles round-trip exactly.
std::string num(double value);

std::vector<std::string> split(std::string_view line, char sep = ',');

} // namespace kvn::csv

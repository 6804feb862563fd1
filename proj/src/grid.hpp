#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace collapse::app {

// A grid is a number, a list of numbers, or a "start:step:stop" string with
// an inclusive stop.
std::vector<double> parse_grid(const nlohmann::json& value);
std::vector<double> parse_range(const std::string& text);

}  // namespace collapse::app

#include "grid.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace collapse::app {

namespace {

double to_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number: '" + s + "'");
    }
    if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

}  // namespace

std::vector<double> parse_range(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() == 1) return {to_number(parts[0])};
    if (parts.size() != 3) throw std::invalid_argument("range must be start:step:stop, got '" + text + "'");
    const double start = to_number(parts[0]), step = to_number(parts[1]), stop = to_number(parts[2]);
    if (step == 0.0 || !std::isfinite(step)) throw std::invalid_argument("range step must be nonzero");
    if ((stop - start) / step < 0.0) throw std::invalid_argument("range step points away from stop");
    // Counted rather than accumulated, so 0:0.1:1 has exactly 11 points.
    const long count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 1000000) throw std::invalid_argument("range has too many points");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
    return out;
}

std::vector<double> parse_grid(const nlohmann::json& value) {
    if (value.is_number()) return {value.get<double>()};
    if (value.is_string()) return parse_range(value.get<std::string>());
    if (value.is_array()) {
        std::vector<double> out;
        for (const auto& v : value) {
            if (!v.is_number()) throw std::invalid_argument("grid lists must contain numbers only");
            out.push_back(v.get<double>());
        }
        if (out.empty()) throw std::invalid_argument("grid must not be empty");
        return out;
    }
    throw std::invalid_argument("grid must be a number, a list or a start:step:stop string");
}

}  // namespace collapse::app

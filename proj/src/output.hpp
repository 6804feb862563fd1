#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

#include "runner.hpp"

namespace collapse::app {

const char* role_name(RowRole r);

// One header line plus one line per row; reals in round-trip precision,
// blank where a column does not apply.
void write_csv(std::ostream& out, const ScenarioResult& result);
std::string csv_text(const ScenarioResult& result);

nlohmann::json sidecar(const ScenarioResult& result);

std::string plot_script(const ScenarioResult& result, const std::string& csv_name);

// Writes <dir>/<name>.csv, <name>.json and optionally plot_<name>.py.
// Returns the CSV path.
std::string write_outputs(const ScenarioResult& result, const std::string& dir, bool with_plot);

}  // namespace collapse::app

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "runner.hpp"

namespace collapse::app {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SuiteOptions {
    int threads = 0;
    std::uint64_t seed = 1;
    // Called as soon as each criterion finishes.
    std::function<void(const CriterionResult&)> on_result;
};

struct SuiteReport {
    std::vector<CriterionResult> criteria;
    bool passed() const;
};

// Built-in suite names; "all" runs every criterion in order.
const std::vector<std::string>& suite_names();

// Throws ValidationError for an unknown name.
SuiteReport run_suite(const std::string& name, const SuiteOptions& options = {});

// Scenarios behind the simulation-backed criteria; these are the ones whose
// CSVs the determinism check compares.
Scenario classical_match_scenario(std::uint64_t seed);
Scenario plateau_scenario(std::uint64_t seed);
Scenario double_descent_scenario(std::uint64_t seed);
Scenario iterative_scenario(std::uint64_t seed);
Scenario mixing_weight_scenario(std::uint64_t seed);
std::vector<Scenario> acceptance_scenarios(std::uint64_t seed);

std::string format_criterion(const CriterionResult& r);

}  // namespace collapse::app

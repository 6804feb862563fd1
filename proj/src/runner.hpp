#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "collapse/risk_theory.hpp"
#include "config.hpp"

namespace collapse::app {

struct RunOptions {
    int threads = 0;  // 0: one per hardware thread
    std::optional<std::uint64_t> seed;
};

enum class RowRole { single, mixed, real_only };

struct ResultRow {
    std::string scenario;
    Mode mode = Mode::theory;
    RowRole role = RowRole::single;
    int d = 0;
    long n = 0;
    long n1 = 0;
    long n2 = 0;
    std::optional<long> m;
    double phi = 0.0;
    double p2 = 0.0;
    double c2 = 0.0;
    double lambda = 0.0;
    std::optional<double> alpha;
    int step = 0;
    double bias = std::numeric_limits<double>::quiet_NaN();
    double variance = std::numeric_limits<double>::quiet_NaN();
    double collapse = std::numeric_limits<double>::quiet_NaN();
    double e_theory = std::numeric_limits<double>::quiet_NaN();
    double e_emp_mean = std::numeric_limits<double>::quiet_NaN();
    double e_emp_se = std::numeric_limits<double>::quiet_NaN();
    int trials = 0;
    bool near_threshold = false;
    bool lambda_floored = false;
    std::uint64_t seed = 0;
    RiskScalars scalars;
    std::string error;

    std::optional<double> gamma() const;
    std::optional<double> psi() const;
};

struct ScenarioResult {
    Scenario scenario;
    std::vector<ResultRow> rows;
};

// Runs fn(0..count-1) on a pool of workers; each index is claimed exactly
// once and callers write into pre-assigned slots.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

int resolve_threads(int requested);

ScenarioResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

}  // namespace collapse::app

// Runs every acceptance criterion and prints one line per criterion.
#include <iostream>

#include "suites.hpp"

int main() {
    using namespace collapse::app;
    SuiteOptions opts;
    opts.threads = 8;
    opts.seed = 1;
    opts.on_result = [](const CriterionResult& r) { std::cout << format_criterion(r) << std::endl; };
    const SuiteReport report = run_suite("all", opts);
    int passed = 0;
    for (const auto& c : report.criteria) passed += c.passed;
    std::cout << passed << "/" << report.criteria.size() << " criteria passed" << std::endl;
    return report.passed() ? 0 : 1;
}

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "output.hpp"
#include "runner.hpp"
#include "suites.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitAcceptance = 3;

int run_command(const std::string& config_path, const std::string& out_dir, int threads,
                std::optional<std::uint64_t> seed) {
    using namespace collapse::app;
    const Config cfg = load_config(config_path);
    const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
    RunOptions ro;
    ro.threads = threads;
    ro.seed = seed;
    int row_errors = 0;
    for (const auto& sc : cfg.scenarios) {
        const ScenarioResult res = run_scenario(sc, ro);
        const std::string path = write_outputs(res, dir, cfg.plot_script);
        for (const auto& r : res.rows) row_errors += !r.error.empty();
        std::cout << sc.name << ": " << res.rows.size() << " rows -> " << path << '\n';
    }
    if (row_errors) std::cerr << row_errors << " rows carry solver or simulation errors; see the JSON sidecars\n";
    return 0;
}

int verify_command(const std::string& suite, int threads, std::uint64_t seed) {
    using namespace collapse::app;
    SuiteOptions opts;
    opts.threads = threads;
    opts.seed = seed;
    opts.on_result = [](const CriterionResult& r) { std::cout << format_criterion(r) << std::endl; };
    const SuiteReport report = run_suite(suite, opts);
    std::cout << (report.passed() ? "all criteria passed" : "some criteria failed") << '\n';
    return report.passed() ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Theory and simulation of ridge regression on mixed real and synthetic data"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run the scenarios of a config file");
    run->add_option("--config", config_path, "Scenario config (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides the config)");
    run->add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
    run->add_option("--seed", seed, "Base seed (overrides every scenario)");

    std::string suite;
    std::uint64_t verify_seed = 1;
    auto* verify = app.add_subcommand("verify", "Run a built-in acceptance suite");
    verify->add_option("--suite", suite, "Suite name, or 'all'")->required();
    verify->add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
    verify->add_option("--seed", verify_seed, "Base seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*run) return run_command(config_path, out_dir, threads, seed);
        return verify_command(suite, threads, verify_seed);
    } catch (const collapse::app::ValidationError& e) {
        std::cerr << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "grid.hpp"
#include "output.hpp"
#include "runner.hpp"
#include "suites.hpp"

using namespace collapse::app;

namespace {

Scenario small_scenario(Mode mode) {
    Scenario sc;
    sc.name = "small";
    sc.mode = mode;
    sc.model.spectrum = SpectrumKind::power_law;
    sc.model.shift = ShiftKind::inverse_covariance;
    sc.regime.d = 20;
    sc.regime.phi = {0.5, 0.25};
    sc.regime.p2 = {0.2, 0.5};
    sc.regime.c2 = {0.0, 1.0};
    sc.regime.lambda = 1e-4;
    sc.trials = 3;
    sc.seed = 9;
    return sc;
}

int exit_code(const std::string& args) {
    const std::string cmd = std::string(COLLAPSE_LAB_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << content;
    return path.string();
}

}  // namespace

TEST(Grid, AcceptsNumbersListsAndRanges) {
    EXPECT_EQ(parse_grid(nlohmann::json(0.5)), std::vector<double>({0.5}));
    EXPECT_EQ(parse_grid(nlohmann::json::parse("[1, 2, 4]")), std::vector<double>({1, 2, 4}));
    const auto r = parse_grid(nlohmann::json("0:0.25:1"));
    ASSERT_EQ(r.size(), 5u);
    EXPECT_DOUBLE_EQ(r.front(), 0.0);
    EXPECT_DOUBLE_EQ(r.back(), 1.0);
    EXPECT_EQ(parse_range("0:0.01:1").size(), 101u);
}

TEST(Config, ParsesMinimalScenario) {
    const Config cfg = parse_config_text(R"({
        "version": 1,
        "scenarios": [{"name": "t", "mode": "theory",
                       "model": {"spectrum": {"kind": "power_law", "exponent": 1.5}},
                       "regime": {"d": 50, "phi": "0.1:0.1:0.5", "p2": [0, 0.5], "c2": 1}}]})");
    ASSERT_EQ(cfg.scenarios.size(), 1u);
    const Scenario& sc = cfg.scenarios[0];
    EXPECT_EQ(sc.mode, Mode::theory);
    EXPECT_EQ(sc.model.spectrum, SpectrumKind::power_law);
    EXPECT_DOUBLE_EQ(sc.model.exponent, 1.5);
    EXPECT_EQ(sc.regime.phi.size(), 5u);
    EXPECT_EQ(sc.regime.p2.size(), 2u);
}

TEST(Config, ReportsEveryIssue) {
    try {
        parse_config_text(R"({
            "version": 1,
            "scenarios": [{"name": "bad", "mode": "nonsense",
                           "regime": {"d": -3, "n": 100, "phi": 0.5, "p2": 1.5}}]})");
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_GE(e.issues().size(), 3u);
    }
    EXPECT_THROW(parse_config_text("{not json"), ValidationError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ValidationError);
}

TEST(Config, ModelQualityMatchesRequest) {
    ModelSpec spec;
    spec.spectrum = SpectrumKind::power_law;
    for (ShiftKind k : {ShiftKind::isotropic, ShiftKind::inverse_covariance}) {
        spec.shift = k;
        const auto m = build_model(spec, 40, 0.36);
        EXPECT_NEAR(m.quality(), 0.36, 1e-12);
    }
}

TEST(Runner, TheoryWithoutShiftHasNoCollapse) {
    Scenario sc = small_scenario(Mode::theory);
    sc.regime.c2 = {0.0};
    const ScenarioResult res = run_scenario(sc);
    ASSERT_EQ(res.rows.size(), 4u);
    for (const auto& r : res.rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_EQ(r.collapse, 0.0);
        EXPECT_NEAR(r.e_theory, r.bias + r.variance, 1e-15 * r.e_theory);
    }
}

TEST(Runner, OutputIndependentOfThreadCount) {
    const Scenario sc = small_scenario(Mode::compare);
    RunOptions one, many;
    one.threads = 1;
    many.threads = 8;
    EXPECT_EQ(csv_text(run_scenario(sc, one)), csv_text(run_scenario(sc, many)));

    Scenario rp = small_scenario(Mode::compare);
    rp.regime.psi = {0.5, 2.0};
    EXPECT_EQ(csv_text(run_scenario(rp, one)), csv_text(run_scenario(rp, many)));
}

TEST(Runner, RowIsReproducibleOnItsOwn) {
    const Scenario sc = small_scenario(Mode::compare);
    const ScenarioResult all = run_scenario(sc);
    for (std::size_t i : {std::size_t{1}, all.rows.size() - 1}) {
        const ResultRow& row = all.rows[i];
        Scenario single = sc;
        single.regime.phi.clear();
        single.regime.p2.clear();
        single.regime.n = {static_cast<double>(row.n)};
        single.regime.n2 = {static_cast<double>(row.n2)};
        single.regime.c2 = {row.c2};
        const ScenarioResult one = run_scenario(single);
        ASSERT_EQ(one.rows.size(), 1u);
        EXPECT_EQ(one.rows[0].e_emp_mean, row.e_emp_mean);
        EXPECT_EQ(one.rows[0].e_emp_se, row.e_emp_se);
        EXPECT_EQ(one.rows[0].e_theory, row.e_theory);
    }
}

TEST(Runner, ParetoPairsMixedAndRealOnly) {
    Scenario sc = small_scenario(Mode::pareto);
    sc.regime.phi = {0.25};
    const ScenarioResult res = run_scenario(sc);
    ASSERT_EQ(res.rows.size() % 2, 0u);
    for (std::size_t i = 0; i < res.rows.size(); i += 2) {
        EXPECT_EQ(res.rows[i].role, RowRole::mixed);
        EXPECT_EQ(res.rows[i + 1].role, RowRole::real_only);
        EXPECT_EQ(res.rows[i + 1].n, res.rows[i].n1);
        EXPECT_EQ(res.rows[i + 1].n2, 0);
    }
}

TEST(Runner, IterateRowsFollowSteps) {
    Scenario sc = small_scenario(Mode::iterate);
    sc.regime.phi = {0.1};
    sc.regime.p2 = {0.5};
    sc.regime.c2 = {1.0};
    sc.regime.steps = 4;
    const ScenarioResult res = run_scenario(sc);
    ASSERT_EQ(res.rows.size(), 4u);
    for (int s = 0; s < 4; ++s) EXPECT_EQ(res.rows[s].step, s + 1);
}

TEST(Runner, PointErrorsStayOnTheirRow) {
    Scenario sc = small_scenario(Mode::theory);
    sc.regime.p2 = {0.0};
    sc.regime.alpha = {0.0, 0.5};
    const ScenarioResult res = run_scenario(sc);
    bool saw_error = false, saw_ok = false;
    for (const auto& r : res.rows) (r.error.empty() ? saw_ok : saw_error) = true;
    EXPECT_TRUE(saw_error);
    EXPECT_TRUE(saw_ok);
}

TEST(Output, CsvHeaderAndRowCount) {
    const ScenarioResult res = run_scenario(small_scenario(Mode::theory));
    const std::string csv = csv_text(res);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "scenario,mode,role,d,n,m,phi,gamma,psi,p2,c2,lambda,alpha,step,B,V,zeta,E_theory,E_emp_mean,"
              "E_emp_se,trials,near_threshold,seed");
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), res.rows.size() + 1);
    const auto meta = sidecar(res);
    EXPECT_EQ(meta["rows"].size(), res.rows.size());
}

TEST(Suites, UnknownNameIsRejected) {
    EXPECT_THROW(run_suite("no-such-suite"), ValidationError);
}

TEST(Suites, IterativeSuitePasses) {
    SuiteOptions opts;
    opts.threads = 2;
    const SuiteReport rep = run_suite("dirt-to-gold", opts);
    ASSERT_EQ(rep.criteria.size(), 1u);
    EXPECT_TRUE(rep.passed()) << rep.criteria[0].detail;
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(exit_code("verify --suite no-such-suite"), 2);
    EXPECT_EQ(exit_code("run --config /nonexistent/config.json"), 2);
    EXPECT_EQ(exit_code("run"), 2);
    const std::string bad = temp_file("collapse_bad.json", R"({"version": 7, "scenarios": []})");
    EXPECT_EQ(exit_code("run --config " + bad), 2);

    const std::string good = temp_file("collapse_good.json", R"({
        "version": 1,
        "scenarios": [{"name": "cli-smoke", "mode": "theory",
                       "regime": {"d": 10, "phi": [0.5], "p2": [0.5], "c2": [1]}}]})");
    const auto out = std::filesystem::temp_directory_path() / "collapse_cli_out";
    EXPECT_EQ(exit_code("run --config " + good + " --out " + out.string()), 0);
    EXPECT_TRUE(std::filesystem::exists(out / "cli-smoke.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "cli-smoke.json"));
}

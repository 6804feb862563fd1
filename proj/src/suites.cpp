#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "collapse/detequiv.hpp"
#include "collapse/simulate.hpp"
#include "output.hpp"

namespace collapse::app {

bool SuiteReport::passed() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.passed; });
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = {"classical-match", "plateau",       "gamma-infinity",
                                                   "double-descent",  "dirt-to-gold",  "mixing-weight",
                                                   "detequiv",        "fixed-point",   "determinism",
                                                   "all"};
    return names;
}

std::string format_criterion(const CriterionResult& r) {
    std::ostringstream os;
    os << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ' ' << r.name << ": " << r.detail;
    return os.str();
}

namespace {

std::string num(double x, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

struct Context {
    SuiteOptions options;
    std::map<std::string, std::string> csv;  // scenario name -> CSV text
};

ScenarioResult run_recorded(Context& ctx, const Scenario& sc) {
    RunOptions ro;
    ro.threads = ctx.options.threads;
    ScenarioResult res = run_scenario(sc, ro);
    ctx.csv[sc.name] = csv_text(res);
    return res;
}

std::string first_error(const ScenarioResult& res) {
    for (const auto& r : res.rows)
        if (!r.error.empty()) return r.error;
    return "";
}

Scenario base_scenario(const std::string& name, Mode mode, std::uint64_t seed) {
    Scenario sc;
    sc.name = name;
    sc.mode = mode;
    sc.seed = seed;
    sc.trials = 5;
    sc.regime.lambda = 1e-8;
    return sc;
}

// ---------------------------------------------------------------------------

CriterionResult classical_match(Context& ctx) {
    CriterionResult cr{1, "classical-match", false, ""};
    const ScenarioResult res = run_recorded(ctx, classical_match_scenario(ctx.options.seed));
    int bad_se = 0, bad_rel = 0, errors = 0;
    double worst_z = 0.0, worst_rel = 0.0;
    std::string where;
    for (const auto& r : res.rows) {
        if (!r.error.empty() || !std::isfinite(r.e_emp_mean) || !std::isfinite(r.e_theory)) {
            ++errors;
            continue;
        }
        const double dev = std::abs(r.e_theory - r.e_emp_mean);
        const double z = dev / r.e_emp_se;
        const double rel = dev / r.e_theory;
        if (z > 3.0) ++bad_se;
        if (rel > 0.05) ++bad_rel;
        if (rel > worst_rel) {
            worst_rel = rel;
            where = "phi=" + num(r.phi) + " p2=" + num(r.p2) + " c2=" + num(r.c2);
        }
        worst_z = std::max(worst_z, z);
    }
    cr.passed = bad_se == 0 && bad_rel == 0 && errors == 0;
    cr.detail = std::to_string(res.rows.size()) + " points, d=" + std::to_string(res.scenario.regime.d) +
                ", max |dev|/SE=" + num(worst_z, 3) + ", max rel dev=" + num(100 * worst_rel, 3) + "% at " + where +
                "; points over 3 SE: " + std::to_string(bad_se) + ", over 5%: " + std::to_string(bad_rel);
    if (errors) cr.detail += ", errors: " + std::to_string(errors) + " (" + first_error(res) + ")";
    return cr;
}

CriterionResult plateau(Context& ctx) {
    CriterionResult cr{2, "plateau", false, ""};
    const ScenarioResult res = run_recorded(ctx, plateau_scenario(ctx.options.seed));
    const double p2 = 0.1, c2 = 1.0;
    const double floor = 0.9 * p2 * p2 * c2;
    std::vector<const ResultRow*> mixed, clean;
    for (const auto& r : res.rows) (r.p2 > 0.0 ? mixed : clean).push_back(&r);
    auto by_n = [](const ResultRow* a, const ResultRow* b) { return a->n < b->n; };
    std::sort(mixed.begin(), mixed.end(), by_n);
    std::sort(clean.begin(), clean.end(), by_n);
    double min_mixed = std::numeric_limits<double>::infinity();
    for (const auto* r : mixed) min_mixed = std::min(min_mixed, r->e_emp_mean);
    const double drop = clean.front()->e_emp_mean / clean.back()->e_emp_mean;
    const bool ok_mixed = mixed.size() == 5 && min_mixed > floor;
    const bool ok_clean = clean.size() == 5 && drop >= 4.0;
    cr.passed = ok_mixed && ok_clean && first_error(res).empty();
    cr.detail = "p2=0.1: min E over n=" + std::to_string(mixed.front()->n) + ".." + std::to_string(mixed.back()->n) +
                " is " + num(min_mixed) + " (floor " + num(floor) + "); p2=0: E drops " + num(drop, 3) +
                "x (need >= 4x)";
    return cr;
}

struct RandomConfig {
    int d;
    double exponent, phi, p2, c2, lambda, sigma1, sigma2;
    bool inverse_shift;
};

RandomConfig draw_config(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RandomConfig c;
    c.d = 50 + static_cast<int>(u(rng) * 350);
    c.exponent = 0.5 + 1.5 * u(rng);
    c.phi = 0.1 + 1.9 * u(rng);
    c.p2 = 0.9 * u(rng);
    c.c2 = u(rng);
    c.lambda = 0.05 + 0.95 * u(rng);
    c.sigma1 = 0.1 + 0.9 * u(rng);
    c.sigma2 = 0.1 + 0.9 * u(rng);
    c.inverse_shift = u(rng) < 0.5;
    return c;
}

MixtureModel config_model(const RandomConfig& c) {
    ModelSpec spec;
    spec.spectrum = SpectrumKind::power_law;
    spec.exponent = c.exponent;
    spec.shift = c.inverse_shift ? ShiftKind::inverse_covariance : ShiftKind::isotropic;
    spec.sigma1 = c.sigma1;
    spec.sigma2 = c.sigma2;
    return build_model(spec, c.d, c.c2);
}

double rel_gap(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

CriterionResult gamma_infinity(Context& ctx) {
    CriterionResult cr{3, "gamma-infinity", false, ""};
    std::mt19937_64 rng(ctx.options.seed);
    const double gamma = 1e4;
    double worst[3] = {0.0, 0.0, 0.0};
    int failures = 0;
    std::string error;
    for (int k = 0; k < 20; ++k) {
        const RandomConfig c = draw_config(rng);
        try {
            const MixtureModel model = config_model(c);
            const RiskDecomposition rp = rp_risk(model, ScalingRatios::projections(c.phi, gamma, c.p2), c.lambda);
            const RiskDecomposition cl = classical_risk(model, ScalingRatios::classical(c.phi, c.p2), c.lambda / gamma);
            const double g[3] = {rel_gap(rp.bias, cl.bias), rel_gap(rp.variance, cl.variance),
                                 rel_gap(rp.collapse, cl.collapse)};
            bool bad = false;
            for (int i = 0; i < 3; ++i) {
                worst[i] = std::max(worst[i], g[i]);
                bad = bad || g[i] > 1e-3;
            }
            failures += bad;
        } catch (const std::exception& e) {
            ++failures;
            if (error.empty()) error = e.what();
        }
    }
    cr.passed = failures == 0;
    cr.detail = "20 power-law configs at gamma=1e4 vs classical at lambda/gamma: max rel gap B=" + num(worst[0], 3) +
                " V=" + num(worst[1], 3) + " zeta=" + num(worst[2], 3) + " (tol 1e-3), failing configs: " +
                std::to_string(failures);
    if (!error.empty()) cr.detail += " (" + error + ")";
    return cr;
}

CriterionResult double_descent(Context& ctx) {
    CriterionResult cr{4, "double-descent", false, ""};
    const ScenarioResult res = run_recorded(ctx, double_descent_scenario(ctx.options.seed));
    int checked = 0, bad_se = 0;
    double worst_z = 0.0;
    std::map<double, std::map<long, double>> emp;  // c2 -> m -> E
    for (const auto& r : res.rows) {
        emp[r.c2][*r.m] = r.e_emp_mean;
        if (*r.m == r.n) continue;
        ++checked;
        const double z = std::abs(r.e_theory - r.e_emp_mean) / r.e_emp_se;
        if (!(z <= 3.0)) ++bad_se;
        if (std::isfinite(z)) worst_z = std::max(worst_z, z);
    }
    double min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& [c2, by_m] : emp) {
        const double peak = by_m.at(500);
        min_ratio = std::min({min_ratio, peak / by_m.at(250), peak / by_m.at(1000)});
    }
    cr.passed = bad_se == 0 && min_ratio >= 10.0 && first_error(res).empty();
    cr.detail = std::to_string(checked) + " points off the threshold, max |dev|/SE=" + num(worst_z, 3) +
                ", over 3 SE: " + std::to_string(bad_se) + "; min E(psi=1)/E(psi in {0.5,2})=" + num(min_ratio, 3) +
                " (need >= 10)";
    return cr;
}

CriterionResult dirt_to_gold(Context& ctx) {
    CriterionResult cr{5, "dirt-to-gold", false, ""};
    double gap = 0.0;
    for (int k = 1; k <= 9; ++k) {
        const double p2 = 0.1 * k;
        const IterativeTrace tr = iterative_mixing(1.0, p2, 1.0, 0.1, 50);
        gap = std::max(gap, tr.max_closed_form_gap);
    }
    const ScenarioResult res = run_recorded(ctx, iterative_scenario(ctx.options.seed));
    double worst_z = 0.0;
    int bad = 0;
    std::string trace;
    for (const auto& r : res.rows) {
        const double z = std::abs(r.e_theory - r.e_emp_mean) / r.e_emp_se;
        if (!(z <= 3.0)) ++bad;
        if (std::isfinite(z)) worst_z = std::max(worst_z, z);
        trace += (trace.empty() ? "" : " ") + num(r.e_emp_mean, 3) + "/" + num(r.e_theory, 3);
    }
    cr.passed = gap <= 1e-12 && bad == 0 && first_error(res).empty();
    cr.detail = "recursion vs closed form max gap " + num(gap, 3) + " (t<=50, p2=0.1..0.9); simulation emp/theory per step: " +
                trace + ", max |dev|/SE=" + num(worst_z, 3);
    return cr;
}

CriterionResult mixing_weight(Context& ctx) {
    CriterionResult cr{6, "mixing-weight", false, ""};
    const Scenario sc = mixing_weight_scenario(ctx.options.seed);
    const ScenarioResult res = run_recorded(ctx, sc);
    const ResultRow* best_emp = nullptr;
    const ResultRow* best_th = nullptr;
    for (const auto& r : res.rows) {
        if (!best_emp || r.e_emp_mean < best_emp->e_emp_mean) best_emp = &r;
        if (std::isfinite(r.e_theory) && (!best_th || r.e_theory < best_th->e_theory)) best_th = &r;
    }
    const ResultRow& any = res.rows.front();
    const MixingWeight w = optimal_mixing_weight(any.phi, any.p2, 1.0, 1.0, any.c2);
    const double a_emp = *best_emp->alpha;
    auto verdict = [&](double a) { return std::abs(a - a_emp) <= 0.05 ? "matches" : "does not match"; };
    cr.passed = a_emp <= 0.05 && first_error(res).empty();
    cr.detail = "empirical argmin alpha=" + num(a_emp, 3) + " (need <= 0.05); small-phi closed form alpha*=" +
                num(w.alpha, 4) + " " + verdict(w.alpha) + ", small-phi grid argmin=" + num(w.alpha_star, 4) + " " +
                verdict(w.alpha_star) + ", stationary point=" + num(w.stationary, 4) + " " + verdict(w.stationary) +
                ", exact weighted risk argmin=" + (best_th ? num(*best_th->alpha, 3) : std::string("n/a")) + " " +
                (best_th ? verdict(*best_th->alpha) : "");
    return cr;
}

struct FunctionalCheck {
    std::string label;
    double theory;
    MeanSE mc;
};

CriterionResult detequiv(Context& ctx) {
    CriterionResult cr{7, "detequiv", false, ""};
    const int trials = 500;
    std::vector<FunctionalCheck> checks;

    auto run = [&](ModelClass mc_class, int d, long n1, long n2, std::optional<long> m, double lambda,
                   std::vector<std::pair<FunctionalKind, int>> kinds, const std::string& tag) {
        const Array s1 = build_power_law_spectrum(d, 1.0).values() * d;
        const Array s2 = 1.5 * s1;
        const double n = static_cast<double>(n1 + n2);
        const double phi = d / n, p2 = n2 / n;
        const ScalingRatios ratios = mc_class == ModelClass::classical
                                         ? ScalingRatios::classical(phi, p2)
                                         : ScalingRatios::projections(phi, static_cast<double>(*m) / d, p2);
        for (const auto& [kind, j] : kinds) {
            FunctionalRequest req;
            req.kind = kind;
            req.source_index = j;
            req.a_matrix = Array::Ones(d);
            req.b_matrix = s1;
            req.model_class = mc_class;
            const double th = mc_class == ModelClass::classical ? classical_functional(req, s1, s2, ratios, lambda)
                                                                : projections_functional(req, s1, s2, ratios, lambda);
            const std::string label = tag + " r" + std::to_string(static_cast<int>(kind) + 1) +
                                      (kind == FunctionalKind::r5 ? "" : "_" + std::to_string(j));
            const MeanSE est = mc_functional(req, s1, s2, n1, n2, lambda, trials, ctx.options.seed,
                                             m ? std::optional<Eigen::Index>(*m) : std::nullopt, scenario_id(label));
            checks.push_back({label, th, est});
        }
    };
    using K = FunctionalKind;
    run(ModelClass::classical, 40, 60, 40, std::nullopt, 0.5,
        {{K::r1, 1}, {K::r1, 2}, {K::r3, 1}, {K::r3, 2}, {K::r4, 1}, {K::r4, 2}}, "classical");
    run(ModelClass::projections, 30, 36, 24, 45, 0.5,
        {{K::r1, 1}, {K::r1, 2}, {K::r3, 1}, {K::r3, 2}, {K::r4, 1}, {K::r4, 2}, {K::r5, 1}}, "projections");

    int bad = 0;
    std::string worst;
    double worst_z = 0.0;
    for (const auto& c : checks) {
        const double z = std::abs(c.theory - c.mc.mean) / c.mc.se;
        if (!(z <= 3.0)) ++bad;
        if (z > worst_z) {
            worst_z = z;
            worst = c.label;
        }
    }
    cr.passed = bad == 0;
    cr.detail = std::to_string(checks.size()) + " functionals vs " + std::to_string(trials) +
                "-trial Monte Carlo, max |dev|/SE=" + num(worst_z, 3) + " (" + worst +
                "), over 3 SE: " + std::to_string(bad);
    return cr;
}

CriterionResult fixed_point(Context& ctx) {
    CriterionResult cr{8, "fixed-point", false, ""};
    std::mt19937_64 rng(ctx.options.seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_residual = 0.0, worst_path = 0.0;
    int states = 0;
    std::map<std::string, int> variants;
    std::string error;
    auto note = [&](double r) {
        worst_residual = std::max(worst_residual, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
        ++states;
    };
    for (int k = 0; k < 20; ++k) {
        const RandomConfig c = draw_config(rng);
        double gamma = 0.2 + 4.8 * u(rng);
        // Keep psi = gamma phi away from the interpolation threshold.
        if (std::abs(gamma * c.phi - 1.0) < 0.2) gamma = 2.0 / c.phi;
        try {
            const MixtureModel model = config_model(c);
            const Spectrum& sigma = model.sigma;
            const double n = c.d / c.phi;
            note(solve_kappa(sigma, n, c.lambda).residual);

            const ScalingRatios rp = ScalingRatios::projections(c.phi, gamma, c.p2);
            const RPCore core = solve_rp_core(sigma, rp, c.lambda);
            note(core.residual_e);
            note(core.residual_tau);
            const RPFixedPoint full = solve_u_omega(sigma, rp, c.lambda, core);
            note(full.residual_u);
            note(full.residual_omega);
            const UOmegaPicard pic = picard_u_omega(sigma, rp, c.lambda, core);
            worst_path = std::max({worst_path, rel_gap(full.u, pic.u), rel_gap(full.omega_prime, pic.omega_prime)});
            ++variants[omega_prime_report(sigma, rp, c.lambda).matching_variant];

            const Array s1 = sigma.values(), s2 = 1.5 * sigma.values();
            note(solve_general_classical(s1, s2, ScalingRatios::classical(c.phi, c.p2), c.lambda, s1).residual);
            note(solve_general_projections(s1, s2, rp, c.lambda, s1).residual);
        } catch (const std::exception& e) {
            worst_residual = std::numeric_limits<double>::infinity();
            if (error.empty()) error = e.what();
        }
    }
    std::string report;
    for (const auto& [v, count] : variants) report += (report.empty() ? "" : ", ") + v + " x" + std::to_string(count);
    cr.passed = worst_residual <= kResidualTolerance && worst_path <= 1e-8 && error.empty();
    cr.detail = std::to_string(states) + " solved states, max residual " + num(worst_residual, 3) +
                " (tol 1e-10); (u, omega') linear vs Picard max rel gap " + num(worst_path, 3) +
                " (tol 1e-8); omega' quotient matching Picard: " + report;
    if (!error.empty()) cr.detail += "; error: " + error;
    return cr;
}

CriterionResult determinism(Context& ctx) {
    CriterionResult cr{9, "determinism", false, ""};
    const std::vector<Scenario> scenarios = acceptance_scenarios(ctx.options.seed);
    const int first = resolve_threads(ctx.options.threads);
    std::vector<int> counts;
    for (int t : {1, 8})
        if (t != first || ctx.csv.empty()) counts.push_back(t);
    int mismatches = 0;
    std::size_t bytes = 0;
    for (const auto& sc : scenarios) {
        std::vector<std::string> texts;
        if (auto it = ctx.csv.find(sc.name); it != ctx.csv.end()) texts.push_back(it->second);
        for (int t : counts) {
            RunOptions ro;
            ro.threads = t;
            texts.push_back(csv_text(run_scenario(sc, ro)));
        }
        bytes += texts.front().size();
        for (const auto& t : texts) mismatches += t != texts.front();
    }
    cr.passed = mismatches == 0;
    cr.detail = std::to_string(scenarios.size()) + " scenario CSVs (" + std::to_string(bytes) +
                " bytes) compared across 1 and 8 workers, mismatches: " + std::to_string(mismatches);
    return cr;
}

using CriterionFn = CriterionResult (*)(Context&);

const std::vector<std::pair<std::string, CriterionFn>>& criteria_table() {
    static const std::vector<std::pair<std::string, CriterionFn>> table = {
        {"classical-match", classical_match}, {"plateau", plateau},           {"gamma-infinity", gamma_infinity},
        {"double-descent", double_descent},   {"dirt-to-gold", dirt_to_gold}, {"mixing-weight", mixing_weight},
        {"detequiv", detequiv},               {"fixed-point", fixed_point},   {"determinism", determinism},
    };
    return table;
}

}  // namespace

Scenario classical_match_scenario(std::uint64_t seed) {
    Scenario sc = base_scenario("classical-match", Mode::compare, seed);
    sc.regime.d = 3000;
    sc.regime.phi = {0.8, 0.4, 0.2, 0.1, 0.05};
    sc.regime.p2 = {0.1, 0.5, 0.9};
    sc.regime.c2 = {0.0, 0.04, 0.36, 1.0};
    return sc;
}

Scenario plateau_scenario(std::uint64_t seed) {
    Scenario sc = base_scenario("plateau", Mode::compare, seed);
    sc.regime.d = 200;
    sc.regime.phi = {0.2, 0.1, 0.05, 0.025, 0.0125};
    sc.regime.p2 = {0.1, 0.0};
    sc.regime.c2 = {1.0};
    return sc;
}

Scenario double_descent_scenario(std::uint64_t seed) {
    Scenario sc = base_scenario("double-descent", Mode::compare, seed);
    sc.model.spectrum = SpectrumKind::power_law;
    sc.model.exponent = 1.0;
    sc.model.shift = ShiftKind::inverse_covariance;
    sc.model.sigma1 = 0.1;
    sc.model.sigma2 = 0.1;
    sc.regime.d = 600;
    sc.regime.n = {500};
    sc.regime.n2 = {200};
    sc.regime.psi = {0.25, 0.5, 1.0, 2.0, 4.0};
    sc.regime.c2 = {0.0, 0.1, 0.5, 1.0};
    return sc;
}

Scenario iterative_scenario(std::uint64_t seed) {
    Scenario sc = base_scenario("dirt-to-gold", Mode::iterate, seed);
    sc.regime.d = 100;
    sc.regime.n = {10000};
    sc.regime.p2 = {0.5};
    sc.regime.c2 = {1.0};
    sc.regime.steps = 5;
    return sc;
}

Scenario mixing_weight_scenario(std::uint64_t seed) {
    Scenario sc = base_scenario("mixing-weight", Mode::compare, seed);
    sc.regime.d = 100;
    sc.regime.n = {10200};
    sc.regime.n2 = {200};
    sc.regime.c2 = {1.0};
    for (int i = 0; i <= 100; ++i) sc.regime.alpha.push_back(i / 100.0);
    return sc;
}

std::vector<Scenario> acceptance_scenarios(std::uint64_t seed) {
    return {classical_match_scenario(seed), plateau_scenario(seed), double_descent_scenario(seed),
            iterative_scenario(seed), mixing_weight_scenario(seed)};
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& options) {
    const auto& table = criteria_table();
    const bool all = name == "all";
    if (!all && std::none_of(table.begin(), table.end(), [&](const auto& e) { return e.first == name; })) {
        std::string known;
        for (const auto& n : suite_names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError({"suite: unknown name '" + name + "' (known: " + known + ")"});
    }
    Context ctx{options, {}};
    SuiteReport report;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& [n, fn] = table[i];
        if (!all && n != name) continue;
        CriterionResult r;
        try {
            r = fn(ctx);
        } catch (const std::exception& e) {
            r.name = n;
            r.id = static_cast<int>(i) + 1;
            r.passed = false;
            r.detail = std::string("aborted: ") + e.what();
        }
        if (options.on_result) options.on_result(r);
        report.criteria.push_back(r);
    }
    return report;
}

}  // namespace collapse::app

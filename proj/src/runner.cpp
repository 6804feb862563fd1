#include "runner.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "collapse/simulate.hpp"

namespace collapse::app {

std::optional<double> ResultRow::gamma() const {
    if (!m) return std::nullopt;
    return static_cast<double>(*m) / d;
}

std::optional<double> ResultRow::psi() const {
    if (!m) return std::nullopt;
    return static_cast<double>(*m) / static_cast<double>(n);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

struct Point {
    long n = 0, n1 = 0, n2 = 0;
    std::optional<long> m;
    double c2 = 0.0;
    std::optional<double> alpha;
    RowRole role = RowRole::single;
};

long rounded(double x) { return std::lround(x); }

std::vector<Point> expand_grid(const Scenario& sc) {
    const RegimeSpec& g = sc.regime;
    std::vector<long> ns;
    for (double v : g.n) ns.push_back(rounded(v));
    for (double v : g.phi) ns.push_back(rounded(g.d / v));

    std::vector<double> c2s = g.c2;
    if (c2s.empty()) c2s.push_back(sc.model.shift == ShiftKind::explicit_values ? -1.0 : 0.0);
    std::vector<std::optional<double>> alphas;
    for (double a : g.alpha) alphas.emplace_back(a);
    if (alphas.empty()) alphas.emplace_back(std::nullopt);

    std::vector<Point> out;
    for (long n : ns) {
        std::vector<long> n2s;
        for (double p : g.p2) n2s.push_back(rounded(p * static_cast<double>(n)));
        for (double v : g.n2) n2s.push_back(rounded(v));
        if (n2s.empty()) n2s.push_back(0);
        for (long n2 : n2s) {
            std::vector<std::optional<long>> ms;
            for (double v : g.m) ms.emplace_back(rounded(v));
            for (double v : g.psi) ms.emplace_back(rounded(v * static_cast<double>(n)));
            if (ms.empty()) ms.emplace_back(std::nullopt);
            for (const auto& m : ms)
                for (double c2 : c2s)
                    for (const auto& a : alphas) {
                        Point p;
                        p.n = n;
                        p.n2 = n2;
                        p.n1 = n - n2;
                        p.m = m;
                        p.c2 = c2;
                        p.alpha = a;
                        if (sc.mode == Mode::pareto) {
                            p.role = RowRole::mixed;
                            out.push_back(p);
                            p.role = RowRole::real_only;
                            p.n = p.n1;
                            p.n2 = 0;
                            out.push_back(p);
                        } else {
                            out.push_back(p);
                        }
                    }
        }
    }
    return out;
}

double pooled_noise(const ModelSpec& spec, double p2) {
    return (1.0 - p2) * spec.sigma1 * spec.sigma1 + p2 * spec.sigma2 * spec.sigma2;
}

void fill_theory(const Scenario& sc, const Point& p, const MixtureModel& model, ResultRow& row) {
    const double phi = row.phi;
    const double p2 = row.p2;
    RiskDecomposition r;
    if (p.alpha) {
        r = weighted_mixing_risk_exact(*p.alpha, model, ScalingRatios::classical(phi, p2), sc.regime.lambda);
    } else if (p.m) {
        const double gamma = static_cast<double>(*p.m) / sc.regime.d;
        r = rp_risk(model, ScalingRatios::projections(phi, gamma, p2), sc.regime.lambda);
    } else {
        r = classical_risk(model, ScalingRatios::classical(phi, p2), sc.regime.lambda);
    }
    row.bias = r.bias;
    row.variance = r.variance;
    row.collapse = r.collapse;
    row.e_theory = r.total;
    row.near_threshold = r.flags.near_threshold;
    row.lambda_floored = r.flags.lambda_floored;
    row.scalars = r.scalars;
}

bool uses_sweep_engine(const Scenario& sc, const Point& p) {
    return !p.m && !p.alpha && sc.mode != Mode::iterate && p.n >= sc.regime.d;
}

}  // namespace

ScenarioResult run_scenario(const Scenario& sc, const RunOptions& options) {
    ScenarioResult result;
    result.scenario = sc;
    const std::uint64_t seed = options.seed.value_or(sc.seed);
    const std::uint64_t sid = scenario_id(sc.name);
    const int d = sc.regime.d;
    const double lambda_fit = floor_lambda(sc.regime.lambda).value;
    const bool want_theory = sc.mode != Mode::simulate;
    const bool want_emp = sc.mode != Mode::theory && sc.trials > 0;
    const int steps = sc.mode == Mode::iterate ? sc.regime.steps : 1;

    const std::vector<Point> points = expand_grid(sc);
    const Spectrum sigma = build_model(sc.model, d, 0.0).sigma;
    const Array delta0 = unit_shift(sc.model, sigma.values());
    auto quality_of = [&](const Point& p) {
        if (p.c2 >= 0.0) return p.c2;
        // Explicit shift without a c2 grid: its own quality.
        const Array v = Eigen::Map<const Array>(sc.model.shift_values.data(), d);
        return (v * sigma.values()).sum();
    };

    // Rows and per-point error messages.
    std::vector<std::vector<ResultRow>> rows(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point& p = points[i];
        ResultRow base;
        base.scenario = sc.name;
        base.mode = sc.mode;
        base.role = p.role;
        base.d = d;
        base.n = p.n;
        base.n1 = p.n1;
        base.n2 = p.n2;
        base.m = p.m;
        base.phi = static_cast<double>(d) / static_cast<double>(p.n);
        base.p2 = static_cast<double>(p.n2) / static_cast<double>(p.n);
        base.c2 = quality_of(p);
        base.lambda = sc.regime.lambda;
        base.alpha = p.alpha;
        base.seed = seed;
        base.trials = want_emp ? sc.trials : 0;
        base.lambda_floored = sc.regime.lambda == 0.0;
        if (p.m) base.near_threshold = near_threshold(static_cast<double>(*p.m) / static_cast<double>(p.n), lambda_fit);
        for (int s = 1; s <= steps; ++s) {
            ResultRow r = base;
            r.step = sc.mode == Mode::iterate ? s : 0;
            rows[i].push_back(r);
        }
    }

    if (want_theory) {
        parallel_for(points.size(), options.threads, [&](std::size_t i) {
            const Point& p = points[i];
            try {
                const MixtureModel model = build_model(sc.model, d, rows[i][0].c2);
                if (sc.mode == Mode::iterate) {
                    const double phi = rows[i][0].phi, p2 = rows[i][0].p2;
                    const IterativeTrace tr =
                        iterative_mixing(rows[i][0].c2, p2, pooled_noise(sc.model, p2), phi, steps);
                    for (int s = 0; s < steps; ++s) rows[i][s].e_theory = tr.risk_sequence[s];
                } else {
                    fill_theory(sc, p, model, rows[i][0]);
                }
            } catch (const std::exception& e) {
                for (auto& r : rows[i]) r.error = std::string("theory: ") + e.what();
            }
        });
    }

    if (want_emp) {
        const int trials = sc.trials;
        // samples[i][s][t]: point i, step s, trial t.
        std::vector<std::vector<std::vector<double>>> samples(
            points.size(), std::vector<std::vector<double>>(steps, std::vector<double>(trials, std::nan(""))));
        std::vector<std::string> emp_error(points.size());
        std::mutex err_mu;
        auto record_error = [&](std::size_t i, const std::string& what) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (emp_error[i].empty()) emp_error[i] = "simulation: " + what;
        };

        // Classical points with n >= d share one streaming pass per trial.
        std::vector<std::size_t> engine_points;
        std::vector<SweepPoint> sweep;
        std::map<std::pair<long, long>, std::size_t> sweep_index;
        std::vector<std::pair<std::size_t, std::size_t>> engine_slot;  // (sweep point, shift position)
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!uses_sweep_engine(sc, points[i])) continue;
            const auto key = std::make_pair(points[i].n, points[i].n1);
            auto it = sweep_index.find(key);
            if (it == sweep_index.end()) {
                it = sweep_index.emplace(key, sweep.size()).first;
                sweep.push_back({points[i].n, points[i].n1, {}});
            }
            engine_points.push_back(i);
            engine_slot.emplace_back(it->second, sweep[it->second].shift_scales.size());
            sweep[it->second].shift_scales.push_back(std::sqrt(rows[i][0].c2));
        }
        std::vector<std::size_t> generic_points;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (!uses_sweep_engine(sc, points[i])) generic_points.push_back(i);

        const std::size_t engine_tasks = engine_points.empty() ? 0 : static_cast<std::size_t>(trials);
        const std::size_t generic_tasks = generic_points.size() * static_cast<std::size_t>(trials);
        const MixtureModel unit_model = build_model(sc.model, d, 0.0);

        parallel_for(engine_tasks + generic_tasks, options.threads, [&](std::size_t task) {
            if (task < engine_tasks) {
                const auto t = static_cast<std::uint64_t>(task);
                try {
                    ClassicalSweepEngine eng(sigma.values(), unit_model.gamma_prior.values(), delta0,
                                             unit_model.noise1, unit_model.noise2, lambda_fit);
                    const SweepResult res = eng.run(sweep, StreamKey{seed, sid, t});
                    for (std::size_t k = 0; k < engine_points.size(); ++k)
                        samples[engine_points[k]][0][t] = res.errors[engine_slot[k].first][engine_slot[k].second];
                } catch (const std::exception& e) {
                    for (std::size_t i : engine_points) record_error(i, e.what());
                }
                return;
            }
            const std::size_t g = task - engine_tasks;
            const std::size_t i = generic_points[g / trials];
            const auto t = static_cast<std::uint64_t>(g % trials);
            const Point& p = points[i];
            const StreamKey key{seed, sid, t};
            try {
                const MixtureModel model = build_model(sc.model, d, rows[i][0].c2);
                if (sc.mode == Mode::iterate) {
                    const auto errs = iterative_mixing_trial(model, p.n, rows[i][0].p2, lambda_fit, steps, key);
                    for (int s = 0; s < steps; ++s) samples[i][s][t] = errs[s];
                    return;
                }
                const Dataset ds = sample_dataset(model, p.n1, p.n2, key);
                SimRun run;
                if (p.alpha) run = weighted_ridge_fit(ds, *p.alpha, lambda_fit, model.sigma.values());
                else if (p.m) run = rp_fit(ds, draw_projection(d, *p.m, key), lambda_fit, model.sigma.values());
                else run = ridge_fit(ds, lambda_fit, model.sigma.values());
                samples[i][0][t] = run.test_error;
            } catch (const std::exception& e) {
                record_error(i, e.what());
            }
        });

        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!emp_error[i].empty()) {
                for (auto& r : rows[i]) r.error += (r.error.empty() ? "" : "; ") + emp_error[i];
                continue;
            }
            for (int s = 0; s < steps; ++s) {
                const MeanSE ms = mean_se(samples[i][s]);
                rows[i][s].e_emp_mean = ms.mean;
                rows[i][s].e_emp_se = ms.se;
            }
        }
    }

    for (auto& group : rows)
        for (auto& r : group) result.rows.push_back(std::move(r));
    return result;
}

}  // namespace collapse::app

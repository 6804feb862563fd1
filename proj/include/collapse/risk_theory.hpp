#pragma once

// Asymptotic test-error decompositions E = B + V + zeta for the classical
// ridge model and the random-projections model, the isotropic closed forms,
// weighted single-step mixing and iterative multi-step mixing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "collapse/detequiv.hpp"
#include "collapse/errors.hpp"
#include "collapse/fixed_point.hpp"
#include "collapse/spectra.hpp"

namespace collapse {

struct RiskFlags {
    bool near_threshold = false;
    bool lambda_floored = false;
};

// Solved scalars behind a decomposition; NaN where not applicable.
struct RiskScalars {
    double kappa = std::numeric_limits<double>::quiet_NaN();
    double u = std::numeric_limits<double>::quiet_NaN();
    double e = std::numeric_limits<double>::quiet_NaN();
    double tau = std::numeric_limits<double>::quiet_NaN();
    double theta = std::numeric_limits<double>::quiet_NaN();
    double omega = std::numeric_limits<double>::quiet_NaN();
    double omega_prime = std::numeric_limits<double>::quiet_NaN();
};

struct RiskDecomposition {
    double bias = 0.0;
    double variance = 0.0;
    double collapse = 0.0;
    double total = 0.0;
    RiskFlags flags;
    RiskScalars scalars;
};

inline RiskDecomposition make_decomposition(double b, double v, double z) {
    RiskDecomposition r;
    r.bias = b;
    r.variance = v;
    r.collapse = z;
    r.total = b + v + z;
    return r;
}

// Normalization used for the random-projections variance, written into
// output metadata.
inline constexpr const char* kRPVarianceConvention =
    "V = sigma^2/(e*n) * (tr Sigma^2 T^-2 + (omega' - theta*u) tr Sigma T^-2), n = d/phi";

namespace detail {

inline void check_model(const MixtureModel& model, const ScalingRatios& ratios) {
    model.validate();
    ratios.validate();
}

inline double sample_count(const MixtureModel& model, const ScalingRatios& ratios, std::optional<double> n) {
    const double d = static_cast<double>(model.dim());
    if (!n) return d / ratios.phi;
    if (!(*n > 0.0)) throw DomainError("sample count must be positive");
    if (std::abs(d / *n - ratios.phi) > 1e-9 * ratios.phi) throw DomainError("n is inconsistent with phi = d/n");
    return *n;
}

}  // namespace detail

// Classical ridge model:
//   B = kappa^2 tr Gamma Sigma T^-2 / (1 - df2/n),  V = sigma^2 u,
//   zeta = p2^2 (1 + p1 u) tr Delta Sigma^3 T^-2 + p2 u tr Delta Sigma (p1 Sigma + kappa)^2 T^-2,
// with T = Sigma + kappa.
inline RiskDecomposition classical_risk(const MixtureModel& model, const ScalingRatios& ratios, double lambda,
                                        std::optional<double> n = std::nullopt, const SolverOptions& opts = {}) {
    detail::check_model(model, ratios);
    const FlooredLambda fl = floor_lambda(lambda);
    const double nn = detail::sample_count(model, ratios, n);
    const ClassicalFixedPoint fp = solve_kappa(model.sigma, nn, fl.value, opts);
    if (!(fp.df2 / nn < 1.0)) throw DomainError("degenerate variance: df2(kappa)/n >= 1");

    const Array& s = model.sigma.values();
    const Array& G = model.gamma_prior.values();
    const Array& D = model.delta.values();
    const double k = fp.kappa, u = fp.u, p1 = ratios.p1(), p2 = ratios.p2;
    const Array T2inv = (s + k).square().inverse();

    const double bias = k * k * (G * s * T2inv).sum() / (1.0 - fp.df2 / nn);
    const double var = model.pooled_noise(ratios) * u;
    const double zeta = p2 * p2 * (1.0 + p1 * u) * (D * s.cube() * T2inv).sum() +
                        p2 * u * (D * s * (p1 * s + k).square() * T2inv).sum();

    RiskDecomposition r = make_decomposition(bias, var, zeta);
    r.flags.lambda_floored = fl.floored;
    r.scalars.kappa = k;
    r.scalars.u = u;
    return r;
}

enum class RPFormula {
    corrected,  // p2^2 on the omega' collapse term
    displayed,  // p2 on the omega' collapse term
};

// Random-projections model with T = Sigma + theta.
inline RiskDecomposition rp_risk(const MixtureModel& model, const ScalingRatios& ratios, double lambda,
                                 std::optional<double> n = std::nullopt, RPFormula formula = RPFormula::corrected,
                                 const SolverOptions& opts = {}) {
    detail::check_model(model, ratios);
    const double gamma = ratios.require_gamma();
    const FlooredLambda fl = floor_lambda(lambda);
    const double nn = detail::sample_count(model, ratios, n);
    const RPCore core = solve_rp_core(model.sigma, ratios, fl.value, opts);
    const RPFixedPoint fp = solve_u_omega(model.sigma, ratios, fl.value, core);

    const Array& s = model.sigma.values();
    const Array& G = model.gamma_prior.values();
    const Array& D = model.delta.values();
    const double th = fp.theta, u = fp.u, wp = fp.omega_prime, p1 = ratios.p1(), p2 = ratios.p2;
    const Array T2inv = (s + th).square().inverse();

    const double bias = (1.0 + u) * th * th * (G * s * T2inv).sum() + wp * (G * s.square() * T2inv).sum();
    const double var = model.pooled_noise(ratios) / (fp.e * nn) *
                       ((s.square() * T2inv).sum() + (wp - th * u) * (s * T2inv).sum());
    const double mid = formula == RPFormula::corrected ? p2 * p2 : p2;
    const double zeta = p2 * p2 * (1.0 + p1 * u) * (D * s.cube() * T2inv).sum() +
                        mid * wp * (D * s.square() * T2inv).sum() +
                        p2 * u * (D * s * (p1 * s + th).square() * T2inv).sum();

    RiskDecomposition r = make_decomposition(bias, var, zeta);
    r.flags.lambda_floored = fl.floored;
    r.flags.near_threshold = near_threshold(ratios.phi * gamma, fl.value);
    r.scalars.u = u;
    r.scalars.e = fp.e;
    r.scalars.tau = fp.tau;
    r.scalars.theta = th;
    r.scalars.omega = fp.omega;
    r.scalars.omega_prime = wp;
    return r;
}

// Isotropic, under-parametrized (phi < 1), ridgeless.
inline RiskDecomposition isotropic_under_risk(double phi, double p2, double sigma2, double c2) {
    if (!(phi > 0.0 && phi < 1.0)) throw DomainError("isotropic_under_risk needs 0 < phi < 1");
    if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("p2 must lie in [0, 1]");
    const double p1 = 1.0 - p2;
    return make_decomposition(0.0, sigma2 * phi / (1.0 - phi), (p2 * p2 + p2 * p1 * phi / (1.0 - phi)) * c2);
}

// Isotropic, over-parametrized (phi > 1), ridgeless.
inline RiskDecomposition isotropic_over_risk(double phi, double p2, double sigma2, double c2, double r2) {
    if (!(phi > 1.0)) throw DomainError("isotropic_over_risk needs phi > 1");
    if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("p2 must lie in [0, 1]");
    const double bias = r2 * (1.0 - 1.0 / phi);
    const double var = sigma2 / (phi - 1.0);
    const double zeta = (p2 * c2 / (phi * phi)) * (p2 * (phi - p2) / (phi - 1.0) + (phi - p2) * (phi - p2));
    return make_decomposition(bias, var, zeta);
}

// ---------------------------------------------------------------------------
// Weighted single-step mixing; alpha weights the synthetic loss.

// Leading-order small-phi risk p2^2 alpha^2 c2 + ((1-alpha) p1 s1 + alpha p2 s2) phi.
inline double weighted_mixing_risk(double alpha, double phi, double p2, double sigma1sq, double sigma2sq, double c2) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("p2 must lie in [0, 1]");
    const double p1 = 1.0 - p2;
    return p2 * p2 * alpha * alpha * c2 + ((1.0 - alpha) * p1 * sigma1sq + alpha * p2 * sigma2sq) * phi;
}

struct MixingWeight {
    double alpha = std::numeric_limits<double>::quiet_NaN();  // displayed closed form
    double alpha_star = 0.0;                                   // grid argmin of the implemented risk
    double stationary = std::numeric_limits<double>::quiet_NaN();
    bool displayed_matches = false;
    bool stationary_matches = false;
};

inline constexpr double kMixingGridStep = 1e-3;

inline double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }

template <class F>
double grid_argmin(F f, double step = kMixingGridStep) {
    const int n = static_cast<int>(std::lround(1.0 / step));
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        const double a = static_cast<double>(i) / n;
        const double v = f(a);
        if (v < best_val) {
            best_val = v;
            best = a;
        }
    }
    return best;
}

inline MixingWeight optimal_mixing_weight(double phi, double p2, double sigma1sq, double sigma2sq, double c2) {
    const double p1 = 1.0 - p2;
    MixingWeight w;
    w.alpha_star = grid_argmin([&](double a) { return weighted_mixing_risk(a, phi, p2, sigma1sq, sigma2sq, c2); });
    if (c2 > 0.0) {
        w.alpha = clip01(1.0 - (p1 * sigma1sq - p2 * sigma2sq) * phi / (2.0 * c2));
        w.displayed_matches = std::abs(w.alpha - w.alpha_star) <= kMixingGridStep;
    }
    if (c2 > 0.0 && p2 > 0.0) {
        w.stationary = clip01((p1 * sigma1sq - p2 * sigma2sq) * phi / (2.0 * p2 * p2 * c2));
        w.stationary_matches = std::abs(w.stationary - w.alpha_star) <= kMixingGridStep;
    }
    return w;
}

// Weighted ridge risk from the two-covariance equivalents: reweighting the
// rows turns the weighted fit into a pooled fit with covariances
// Sigma_1 = (1-alpha) Sigma / p1, Sigma_2 = alpha Sigma / p2 and label noise
// scaled by the same factors. Then
//   B = lambda^2 r2(Gamma, Sigma),  V = sum_j s_j^2 / n r4_j(I, Sigma),
//   zeta = r3_2(Delta, Sigma).
inline RiskDecomposition weighted_mixing_risk_exact(double alpha, const MixtureModel& model,
                                                    const ScalingRatios& ratios, double lambda,
                                                    const SolverOptions& opts = {}) {
    detail::check_model(model, ratios);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    const double p1 = ratios.p1(), p2 = ratios.p2;
    if ((alpha < 1.0 && p1 == 0.0) || (alpha > 0.0 && p2 == 0.0))
        throw DomainError("a nonzero weight needs samples from that source");
    const FlooredLambda fl = floor_lambda(lambda);
    const Array& s = model.sigma.values();
    const double pi1 = p1 > 0.0 ? (1.0 - alpha) / p1 : 0.0;
    const double pi2 = p2 > 0.0 ? alpha / p2 : 0.0;
    const Array s1 = pi1 * s, s2 = pi2 * s;
    const double n = static_cast<double>(model.dim()) / ratios.phi;

    const EquivalentsView v = view_of(solve_general_classical(s1, s2, ratios, fl.value, s, opts));
    const Array ones = Array::Ones(s.size());
    const double bias =
        fl.value * fl.value * assemble_functional(FunctionalKind::r2, 1, model.gamma_prior.values(), &s, v, s1, s2);
    const double var = (p1 > 0.0 ? pi1 * model.noise1 / n * assemble_functional(FunctionalKind::r4, 1, ones, &s, v, s1, s2) : 0.0) +
                       (p2 > 0.0 ? pi2 * model.noise2 / n * assemble_functional(FunctionalKind::r4, 2, ones, &s, v, s1, s2) : 0.0);
    const double zeta = p2 > 0.0 ? assemble_functional(FunctionalKind::r3, 2, model.delta.values(), &s, v, s1, s2) : 0.0;
    RiskDecomposition r = make_decomposition(bias, var, zeta);
    r.flags.lambda_floored = fl.floored;
    return r;
}

// ---------------------------------------------------------------------------
// Iterative mixing: c_{t+1}^2 = Ebar + p2^2 c_t^2 and E^(t) = c_t^2.

enum class BaselineForm {
    exact,        // sigma^2 phi / (1 - phi)
    leading_order // sigma^2 phi
};

struct IterativeTrace {
    std::vector<double> quality_sequence;  // c_0^2 .. c_T^2
    std::vector<double> risk_sequence;     // E^(1) .. E^(T)
    std::vector<double> closed_form;       // closed form at t = 1 .. T
    double baseline = 0.0;
    double max_closed_form_gap = 0.0;
};

inline double iterative_baseline(double sigma2, double phi, BaselineForm form = BaselineForm::exact) {
    if (form == BaselineForm::leading_order) return sigma2 * phi;
    if (!(phi > 0.0 && phi < 1.0)) throw DomainError("exact baseline needs 0 < phi < 1");
    return sigma2 * phi / (1.0 - phi);
}

inline double iterative_closed_form(double c0sq, double p2, double baseline, int t) {
    const double q = p2 * p2;
    const double qt = std::pow(q, t);
    if (q == 1.0) return c0sq + t * baseline;
    return qt * c0sq + (1.0 - qt) / (1.0 - q) * baseline;
}

inline IterativeTrace iterative_mixing(double c0sq, double p2, double sigma2, double phi, int steps,
                                       BaselineForm form = BaselineForm::exact) {
    if (steps < 0) throw DomainError("steps must be nonnegative");
    if (c0sq < 0.0) throw DomainError("c0^2 must be nonnegative");
    if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("p2 must lie in [0, 1]");
    IterativeTrace tr;
    tr.baseline = iterative_baseline(sigma2, phi, form);
    tr.quality_sequence.push_back(c0sq);
    double c = c0sq;
    for (int t = 1; t <= steps; ++t) {
        c = tr.baseline + p2 * p2 * c;
        tr.quality_sequence.push_back(c);
        tr.risk_sequence.push_back(c);
        const double cf = iterative_closed_form(c0sq, p2, tr.baseline, t);
        tr.closed_form.push_back(cf);
        tr.max_closed_form_gap = std::max(tr.max_closed_form_gap, std::abs(cf - c) / std::max(1.0, std::abs(c)));
    }
    return tr;
}

}  // namespace collapse

#pragma once

// Self-consistency equations: kappa for the classical model, (e, tau) and
// (u, omega) for random projections, the two-covariance systems, and
// ridgeless limits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "collapse/errors.hpp"
#include "collapse/spectra.hpp"

namespace collapse {

struct SolverOptions {
    double damping = 0.5;  // weight on the new iterate
    double rtol = 1e-12;
    int max_iter = 100000;
};

// Residuals above this (relative) fail the post-condition of every solver.
inline constexpr double kResidualTolerance = 1e-10;

// Interpolation-threshold tag: |psi - 1| < 0.01 with lambda < 1e-6.
inline bool near_threshold(double psi, double lambda) {
    return std::abs(psi - 1.0) < 0.01 && lambda < 1e-6;
}

inline constexpr double kLambdaFloor = 1e-8;

// Ridgeless requests are evaluated at the floor; the flag records it.
struct FlooredLambda {
    double value;
    bool floored;
};

inline FlooredLambda floor_lambda(double lambda) {
    if (lambda < 0.0) throw DomainError("lambda must be nonnegative");
    if (lambda == 0.0) return {kLambdaFloor, true};
    return {lambda, false};
}

namespace detail {

// Sum of a(j)/(lam_j + t)^l-type terms is done with Eigen arrays; these
// helpers keep the formulas short.
inline double tr(const Array& a) { return a.sum(); }
inline double ntr(const Array& a) { return a.mean(); }

// Bisection on a monotone increasing scalar function over [lo, hi], in log
// space when both ends are positive.
template <class F>
double bisect_increasing(F f, double lo, double hi, double target, int iters = 400) {
    for (int i = 0; i < iters; ++i) {
        const double mid = (lo > 0.0 && hi / lo > 4.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (f(mid) < target) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-16 * hi) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Classical model: kappa - lambda = kappa df1(kappa)/n.

struct ClassicalFixedPoint {
    double kappa = 0.0;
    double u = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double n = 0.0;
    double lambda = 0.0;
    double residual = 0.0;  // |kappa - lambda - kappa df1/n| / kappa
    int iterations = 0;
    bool used_fallback = false;
};

inline double kappa_map(const Array& lam, double n, double lambda, double kappa) {
    return lambda + (kappa * lam / (lam + kappa)).sum() / n;
}

inline ClassicalFixedPoint solve_kappa(const Spectrum& sigma, double n, double lambda,
                                       const SolverOptions& opts = {}) {
    if (!(lambda > 0.0)) throw DomainError("solve_kappa needs lambda > 0");
    if (!(n > 0.0)) throw DomainError("solve_kappa needs n > 0");
    const Array& lam = sigma.values();
    const double hi = lambda + sigma.trace() / n;

    ClassicalFixedPoint out;
    out.n = n;
    out.lambda = lambda;

    double kappa = hi;
    double prev_step = std::numeric_limits<double>::infinity();
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const double next = (1.0 - opts.damping) * kappa + opts.damping * kappa_map(lam, n, lambda, kappa);
        const double step = std::abs(next - kappa);
        kappa = next;
        if (step <= opts.rtol * kappa) {
            converged = true;
            break;
        }
        // Contraction this weak means Picard would take far too long.
        if (it > 50 && step > 0.999 * prev_step) break;
        prev_step = step;
    }
    out.iterations = it + 1;

    if (!converged) {
        // g(k) = k (1 - df1(k)/n) is convex with g(0) = 0, so Newton from the
        // right end of the bracket [lambda, hi] decreases monotonically.
        out.used_fallback = true;
        double lo = lambda;
        double k = hi;
        for (int i = 0; i < 200; ++i) {
            const Array r = lam / (lam + k);
            const double g = k * (1.0 - r.sum() / n) - lambda;
            const double dg = 1.0 - r.square().sum() / n;
            if (g < 0.0) lo = k;
            double next = (dg > 0.0) ? k - g / dg : 0.5 * (lo + k);
            if (!(next > lo)) next = 0.5 * (lo + k);
            if (std::abs(next - k) <= opts.rtol * k) {
                k = next;
                break;
            }
            k = next;
        }
        kappa = k;
    }

    const Array r = lam / (lam + kappa);
    out.kappa = kappa;
    out.df1 = r.sum();
    out.df2 = r.square().sum();
    out.residual = std::abs(kappa - lambda - kappa * out.df1 / n) / kappa;
    if (!(out.residual <= kResidualTolerance))
        throw SolverError("kappa fixed point did not converge", out.residual);
    const double ratio = out.df2 / n;
    out.u = ratio < 1.0 ? ratio / (1.0 - ratio) : std::numeric_limits<double>::infinity();
    return out;
}

// ---------------------------------------------------------------------------
// Random projections, single covariance: (e, tau) and theta = lambda/(gamma tau e).

struct RPCore {
    double e = 1.0;
    double tau = 1.0;
    double theta = 0.0;
    double eta = 0.0;  // normalized tr Sigma (Sigma + theta)^-1
    double residual_e = 0.0;
    double residual_tau = 0.0;
    int iterations = 0;
    bool used_fallback = false;
};

struct RPCoreResiduals {
    double e;
    double tau;
};

// Relative residuals of 1/e = 1 + psi tau ntr Sigma K^-1 and
// 1/tau = 1 + ntr K0 K^-1 with K0 = e Sigma, K = gamma tau K0 + lambda.
inline RPCoreResiduals rp_core_residuals(const Array& lam, double phi, double gamma, double lambda,
                                         double e, double tau) {
    const double psi = phi * gamma;
    const Array K = gamma * tau * e * lam + lambda;
    const double re = std::abs(e * (1.0 + psi * tau * (lam / K).mean()) - 1.0);
    const double rt = std::abs(tau * (1.0 + (e * lam / K).mean()) - 1.0);
    return {re, rt};
}

inline RPCore solve_rp_core(const Spectrum& sigma, const ScalingRatios& ratios, double lambda,
                            const SolverOptions& opts = {}) {
    if (!(lambda > 0.0)) throw DomainError("solve_rp_core needs lambda > 0");
    const double gamma = ratios.require_gamma();
    const double phi = ratios.phi;
    const double psi = phi * gamma;
    const Array& lam = sigma.values();

    RPCore out;
    double e = 1.0, tau = 1.0;
    double prev_step = std::numeric_limits<double>::infinity();
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Array K = gamma * tau * e * lam + lambda;
        const double e_new = (1.0 - opts.damping) * e + opts.damping / (1.0 + psi * tau * (lam / K).mean());
        K = gamma * tau * e_new * lam + lambda;
        const double t_new = (1.0 - opts.damping) * tau + opts.damping / (1.0 + (e_new * lam / K).mean());
        const double step = std::max(std::abs(e_new - e) / e_new, std::abs(t_new - tau) / t_new);
        e = e_new;
        tau = t_new;
        if (step <= opts.rtol) {
            converged = true;
            break;
        }
        if (it > 50 && step > 0.999 * prev_step) break;
        prev_step = step;
    }
    out.iterations = it + 1;

    auto eta_of = [&](double th) { return (lam / (lam + th)).mean(); };
    // 1 - phi eta and 1 - eta/gamma written without cancellation at phi = 1 or gamma = 1.
    auto e_of = [&](double th) { return (1.0 - phi) + phi * th * (1.0 / (lam + th)).mean(); };
    auto tau_of = [&](double th) { return (1.0 - 1.0 / gamma) + th * (1.0 / (lam + th)).mean() / gamma; };

    if (converged) {
        out.theta = lambda / (gamma * tau * e);
        out.e = e;
        out.tau = tau;
    } else {
        // theta (1 - phi eta(theta)) (gamma - eta(theta)) = lambda is increasing
        // on the admissible range where both factors are positive.
        out.used_fallback = true;
        auto F = [&](double th) { return th * e_of(th) * gamma * tau_of(th); };
        const double cap = std::min(1.0 / phi, gamma);
        double lo = 0.0;
        if (cap < 1.0) {
            // eta is decreasing in theta: find eta(theta_min) = cap.
            double a = 0.0, b = 1.0;
            while (eta_of(b) > cap) b *= 2.0;
            for (int i = 0; i < 300; ++i) {
                const double mid = 0.5 * (a + b);
                if (eta_of(mid) > cap) a = mid;
                else b = mid;
            }
            lo = b;
        }
        double hi = std::max(lo, 1e-300) + lambda;
        while (F(hi) < lambda) hi *= 2.0;
        double start = lo;
        if (start == 0.0) {
            start = hi;
            while (start > 1e-300 && F(start) >= lambda) start *= 0.5;
        }
        out.theta = detail::bisect_increasing(F, start, hi, lambda);
        out.e = e_of(out.theta);
        out.tau = tau_of(out.theta);
    }
    // Newton polish: near psi = 1 with tiny lambda, e and tau come out of a
    // cancelling difference and need a few exact steps on the raw system.
    for (int k = 0; k < 30; ++k) {
        const double e0 = out.e, t0 = out.tau;
        const auto r0 = rp_core_residuals(lam, phi, gamma, lambda, e0, t0);
        if (std::max(r0.e, r0.tau) < 1e-15) break;
        const Array K = gamma * t0 * e0 * lam + lambda;
        const double a = (lam / K).mean();
        const double b = (lam.square() / K.square()).mean();
        const double f1 = e0 * (1.0 + psi * t0 * a) - 1.0;
        const double f2 = t0 * (1.0 + e0 * a) - 1.0;
        const double j11 = 1.0 + psi * t0 * a - e0 * psi * t0 * gamma * t0 * b;
        const double j12 = e0 * psi * (a - t0 * gamma * e0 * b);
        const double j21 = t0 * (a - e0 * gamma * t0 * b);
        const double j22 = 1.0 + e0 * a - t0 * e0 * gamma * e0 * b;
        const double det = j11 * j22 - j12 * j21;
        if (!(std::abs(det) > 0.0)) break;
        double de = (f1 * j22 - f2 * j12) / det;
        double dt = (j11 * f2 - j21 * f1) / det;
        double step = 1.0;
        while (step > 1e-6 && (e0 - step * de <= 0.0 || t0 - step * dt <= 0.0)) step *= 0.5;
        const double e1 = e0 - step * de, t1 = t0 - step * dt;
        const auto r1 = rp_core_residuals(lam, phi, gamma, lambda, e1, t1);
        if (!(std::max(r1.e, r1.tau) < std::max(r0.e, r0.tau))) break;
        out.e = e1;
        out.tau = t1;
        out.theta = lambda / (gamma * t1 * e1);
    }
    out.eta = eta_of(out.theta);
    const auto res = rp_core_residuals(lam, phi, gamma, lambda, out.e, out.tau);
    out.residual_e = res.e;
    out.residual_tau = res.tau;
    if (!(res.e <= kResidualTolerance && res.tau <= kResidualTolerance))
        throw SolverError("random-projection (e, tau) system did not converge", std::max(res.e, res.tau));
    return out;
}

struct RPFixedPoint {
    double e = 1.0;
    double tau = 1.0;
    double u = 0.0;
    double omega = 0.0;
    double theta = 0.0;
    double omega_prime = 0.0;
    double eta = 0.0;
    double residual_u = 0.0;
    double residual_omega = 0.0;
};

// Second-order scalars (u, omega') with a general source matrix B. With
// T = Sigma + theta, a = ntr Sigma^2 T^-2, b = ntr Sigma T^-2:
//   u = phi (a u + b omega' + ntr Sigma B T^-2)
//   gamma omega' = a omega' + theta^2 (b u + ntr B T^-2)
// B = Sigma gives the single-covariance system used for the variance and the
// collapse term; B = Gamma gives the bias.
inline RPFixedPoint solve_u_omega(const Spectrum& sigma, const ScalingRatios& ratios, double /*lambda*/,
                                  const RPCore& core, const Array* source = nullptr) {
    const double gamma = ratios.require_gamma();
    const double phi = ratios.phi;
    const Array& lam = sigma.values();
    const double th = core.theta;
    const Array T2inv = (lam + th).square().inverse();
    const Array& B = source ? *source : lam;

    const double a = (lam.square() * T2inv).mean();
    const double b = (lam * T2inv).mean();
    const double s1 = phi * (lam * B * T2inv).mean();
    const double s2 = th * th * (B * T2inv).mean();

    const double m11 = 1.0 - phi * a, m12 = -phi * b;
    const double m21 = -th * th * b, m22 = gamma - a;
    const double det = m11 * m22 - m12 * m21;
    if (std::abs(det) < 1e-14)
        throw ThresholdError("singular (u, omega') system at the interpolation threshold", phi * gamma);

    RPFixedPoint out;
    out.e = core.e;
    out.tau = core.tau;
    out.theta = th;
    out.eta = core.eta;
    out.u = (s1 * m22 - m12 * s2) / det;
    out.omega_prime = (m11 * s2 - m21 * s1) / det;
    out.omega = gamma * core.tau * core.tau * out.omega_prime;

    const double ru = out.u - phi * (a * out.u + b * out.omega_prime) - s1;
    const double ro = gamma * out.omega_prime - a * out.omega_prime - th * th * b * out.u - s2;
    out.residual_u = std::abs(ru) / std::max(std::abs(out.u), 1e-300);
    out.residual_omega = std::abs(ro) / std::max(gamma * std::abs(out.omega_prime), 1e-300);
    if (out.u == 0.0) out.residual_u = std::abs(ru);
    if (out.omega_prime == 0.0) out.residual_omega = std::abs(ro);
    return out;
}

// Full single-covariance solve: core plus (u, omega') with source Sigma.
inline RPFixedPoint solve_rp(const Spectrum& sigma, const ScalingRatios& ratios, double lambda,
                             const SolverOptions& opts = {}) {
    const RPCore core = solve_rp_core(sigma, ratios, lambda, opts);
    return solve_u_omega(sigma, ratios, lambda, core);
}

struct UOmegaPicard {
    double u = 0.0;
    double omega = 0.0;
    double omega_prime = 0.0;
    int iterations = 0;
};

// Damped Picard on the defining form
//   u = psi e^2 ntr Sigma (gamma tau^2 L' + omega) K^-2,
//   omega = tau^2 ntr (gamma omega K0^2 + lambda^2 L') K^-2,  L' = (1+u) Sigma.
inline UOmegaPicard picard_u_omega(const Spectrum& sigma, const ScalingRatios& ratios, double lambda,
                                   const RPCore& core, const SolverOptions& opts = {}) {
    const double gamma = ratios.require_gamma();
    const double psi = ratios.phi * gamma;
    const Array& lam = sigma.values();
    const double e = core.e, tau = core.tau;
    const Array K = gamma * tau * e * lam + lambda;
    const Array K2inv = K.square().inverse();
    const Array K0 = e * lam;

    double u = 0.0, omega = 0.0;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const Array Lp = (1.0 + u) * lam;
        const double u_map = psi * e * e * (lam * (gamma * tau * tau * Lp + omega) * K2inv).mean();
        const double w_map = tau * tau * ((gamma * omega * K0.square() + lambda * lambda * Lp) * K2inv).mean();
        const double u_new = (1.0 - opts.damping) * u + opts.damping * u_map;
        const double w_new = (1.0 - opts.damping) * omega + opts.damping * w_map;
        const double step = std::max(std::abs(u_new - u) / std::max(u_new, 1e-300),
                                     std::abs(w_new - omega) / std::max(w_new, 1e-300));
        u = u_new;
        omega = w_new;
        if (step <= opts.rtol) break;
    }
    if (it >= opts.max_iter) throw SolverError("Picard iteration for (u, omega) did not converge", 0.0);
    return {u, omega, omega / (gamma * tau * tau), it + 1};
}

// Arbitration between the two closed-form quotients for omega'.
struct OmegaPrimeReport {
    double linear_system = 0.0;
    double picard = 0.0;
    double quotient_i22 = 0.0;  // theta^2 I22 / (gamma - phi z - I22), as displayed
    double quotient_i12 = 0.0;  // theta^2 I12 / (gamma - phi z - I22), from elimination
    double rel_err_i22 = 0.0;   // against Picard
    double rel_err_i12 = 0.0;
    std::string matching_variant;
};

inline OmegaPrimeReport omega_prime_report(const Spectrum& sigma, const ScalingRatios& ratios, double lambda,
                                           const SolverOptions& opts = {}) {
    const RPCore core = solve_rp_core(sigma, ratios, lambda, opts);
    const RPFixedPoint lin = solve_u_omega(sigma, ratios, lambda, core);
    const UOmegaPicard pic = picard_u_omega(sigma, ratios, lambda, core, opts);
    const double gamma = ratios.require_gamma();
    const double th = core.theta;
    const double i22 = spectral_moment(sigma, 2, 2, th, true);
    const double i12 = spectral_moment(sigma, 1, 2, th, true);
    const double z = i22 * (gamma - i22) + th * th * i12 * i12;
    const double den = gamma - ratios.phi * z - i22;

    OmegaPrimeReport r;
    r.linear_system = lin.omega_prime;
    r.picard = pic.omega_prime;
    r.quotient_i22 = th * th * i22 / den;
    r.quotient_i12 = th * th * i12 / den;
    r.rel_err_i22 = std::abs(r.quotient_i22 - r.picard) / std::abs(r.picard);
    r.rel_err_i12 = std::abs(r.quotient_i12 - r.picard) / std::abs(r.picard);
    if (r.rel_err_i12 < 1e-8 && r.rel_err_i22 >= 1e-8) r.matching_variant = "I12";
    else if (r.rel_err_i22 < 1e-8 && r.rel_err_i12 >= 1e-8) r.matching_variant = "I22";
    else if (r.rel_err_i22 < 1e-8) r.matching_variant = "both";
    else r.matching_variant = "neither";
    return r;
}

// ---------------------------------------------------------------------------
// Two covariances (classical): e_j = 1/(1 + phi ntr Sigma_j K^-1),
// K = p1 e1 Sigma1 + p2 e2 Sigma2 + lambda, and
// u_j = phi e_j^2 ntr Sigma_j L' K^-2, L' = B + p1 u1 Sigma1 + p2 u2 Sigma2.

struct GeneralClassicalState {
    double e1 = 1.0, e2 = 1.0;
    double u1 = 0.0, u2 = 0.0;
    double p1 = 1.0, p2 = 0.0;
    double phi = 0.5;
    double lambda = 0.0;
    double residual = 0.0;
    Array K;       // p1 e1 Sigma1 + p2 e2 Sigma2 + lambda
    Array Lprime;  // B + p1 u1 Sigma1 + p2 u2 Sigma2
};

inline GeneralClassicalState solve_general_classical(const Array& s1, const Array& s2, const ScalingRatios& ratios,
                                                     double lambda, const Array& B, const SolverOptions& opts = {}) {
    if (s1.size() != s2.size() || B.size() != s1.size())
        throw DomainError("two-covariance system needs spectra of equal dimension");
    if (!(lambda > 0.0)) throw DomainError("two-covariance system needs lambda > 0");
    const double phi = ratios.phi, p1 = ratios.p1(), p2 = ratios.p2;

    GeneralClassicalState st;
    st.p1 = p1;
    st.p2 = p2;
    st.phi = phi;
    st.lambda = lambda;
    double e1 = 1.0, e2 = 1.0;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Array K = p1 * e1 * s1 + p2 * e2 * s2 + lambda;
        const double n1 = 1.0 / (1.0 + phi * (s1 / K).mean());
        const double n2 = 1.0 / (1.0 + phi * (s2 / K).mean());
        const double step = std::max(std::abs(n1 - e1) / n1, std::abs(n2 - e2) / n2);
        e1 = (1.0 - opts.damping) * e1 + opts.damping * n1;
        e2 = (1.0 - opts.damping) * e2 + opts.damping * n2;
        if (step <= opts.rtol) break;
    }
    if (it >= opts.max_iter) throw SolverError("two-covariance (e1, e2) system did not converge", 0.0);
    st.e1 = e1;
    st.e2 = e2;
    st.K = p1 * e1 * s1 + p2 * e2 * s2 + lambda;
    const Array K2inv = st.K.square().inverse();

    auto m = [&](const Array& x) { return (x * K2inv).mean(); };
    Eigen::Matrix2d A;
    Eigen::Vector2d rhs;
    A(0, 0) = 1.0 - phi * e1 * e1 * p1 * m(s1 * s1);
    A(0, 1) = -phi * e1 * e1 * p2 * m(s1 * s2);
    A(1, 0) = -phi * e2 * e2 * p1 * m(s2 * s1);
    A(1, 1) = 1.0 - phi * e2 * e2 * p2 * m(s2 * s2);
    rhs << phi * e1 * e1 * m(s1 * B), phi * e2 * e2 * m(s2 * B);
    const Eigen::Vector2d u = A.fullPivLu().solve(rhs);
    st.u1 = u[0];
    st.u2 = u[1];
    st.Lprime = B + p1 * st.u1 * s1 + p2 * st.u2 * s2;

    const double r1 = std::abs(e1 * (1.0 + phi * (s1 / st.K).mean()) - 1.0);
    const double r2 = std::abs(e2 * (1.0 + phi * (s2 / st.K).mean()) - 1.0);
    const double ru1 = std::abs(st.u1 - phi * e1 * e1 * m(s1 * st.Lprime));
    const double ru2 = std::abs(st.u2 - phi * e2 * e2 * m(s2 * st.Lprime));
    st.residual = std::max({r1, r2, ru1 / std::max(std::abs(st.u1), 1e-300), ru2 / std::max(std::abs(st.u2), 1e-300)});
    if (st.u1 == 0.0 && st.u2 == 0.0) st.residual = std::max({r1, r2, ru1, ru2});
    if (!(std::max(r1, r2) <= kResidualTolerance))
        throw SolverError("two-covariance (e1, e2) system did not converge", std::max(r1, r2));
    return st;
}

inline GeneralClassicalState solve_general_classical(const Spectrum& sigma1, const Spectrum& sigma2,
                                                     const ScalingRatios& ratios, double lambda,
                                                     const Spectrum& b_matrix, const SolverOptions& opts = {}) {
    return solve_general_classical(sigma1.values(), sigma2.values(), ratios, lambda, b_matrix.values(), opts);
}

// ---------------------------------------------------------------------------
// Two covariances (random projections): e_j = 1/(1 + psi tau ntr Sigma_j K^-1),
// tau = 1/(1 + ntr K0 K^-1), K0 = p1 e1 Sigma1 + p2 e2 Sigma2,
// K = gamma tau K0 + lambda; then the linear system in (v1, v2, omega)
//   v_j = psi e_j^2 ntr Sigma_j (gamma tau^2 L + lambda omega) K^-2,
//   omega = tau^2 ntr (gamma omega K0^2 + lambda L) K^-2,
//   L = p1 v1 Sigma1 + p2 v2 Sigma2 + lambda B,  u_j = v_j / lambda.

struct GeneralProjectionsState {
    double e1 = 1.0, e2 = 1.0, tau = 1.0;
    double v1 = 0.0, v2 = 0.0, omega = 0.0;
    double u1 = 0.0, u2 = 0.0;
    double p1 = 1.0, p2 = 0.0;
    double phi = 0.5, gamma = 1.0;
    double lambda = 0.0;
    double residual = 0.0;
    Array K0;
    Array K;
    Array Lprime;  // B + p1 u1 Sigma1 + p2 u2 Sigma2 = L / lambda
};

inline GeneralProjectionsState solve_general_projections(const Array& s1, const Array& s2,
                                                         const ScalingRatios& ratios, double lambda,
                                                         const Array& B, const SolverOptions& opts = {}) {
    if (s1.size() != s2.size() || B.size() != s1.size())
        throw DomainError("two-covariance system needs spectra of equal dimension");
    if (!(lambda > 0.0)) throw DomainError("two-covariance system needs lambda > 0");
    const double phi = ratios.phi, p1 = ratios.p1(), p2 = ratios.p2;
    const double gamma = ratios.require_gamma();
    const double psi = phi * gamma;

    GeneralProjectionsState st;
    st.p1 = p1;
    st.p2 = p2;
    st.phi = phi;
    st.gamma = gamma;
    st.lambda = lambda;

    double e1 = 1.0, e2 = 1.0, tau = 1.0;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const Array K0 = p1 * e1 * s1 + p2 * e2 * s2;
        const Array K = gamma * tau * K0 + lambda;
        const double n1 = 1.0 / (1.0 + psi * tau * (s1 / K).mean());
        const double n2 = 1.0 / (1.0 + psi * tau * (s2 / K).mean());
        const double nt = 1.0 / (1.0 + (K0 / K).mean());
        const double step = std::max({std::abs(n1 - e1) / n1, std::abs(n2 - e2) / n2, std::abs(nt - tau) / nt});
        e1 = (1.0 - opts.damping) * e1 + opts.damping * n1;
        e2 = (1.0 - opts.damping) * e2 + opts.damping * n2;
        tau = (1.0 - opts.damping) * tau + opts.damping * nt;
        if (step <= opts.rtol) break;
    }
    if (it >= opts.max_iter) throw SolverError("two-covariance (e1, e2, tau) system did not converge", 0.0);
    st.e1 = e1;
    st.e2 = e2;
    st.tau = tau;
    st.K0 = p1 * e1 * s1 + p2 * e2 * s2;
    st.K = gamma * tau * st.K0 + lambda;
    const Array K2inv = st.K.square().inverse();
    auto m = [&](const Array& x) { return (x * K2inv).mean(); };

    const double g2 = gamma * tau * tau;
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs;
    const double es[2] = {e1, e2};
    const Array* ss[2] = {&s1, &s2};
    for (int j = 0; j < 2; ++j) {
        const double c = psi * es[j] * es[j];
        A(j, 0) -= c * g2 * p1 * m(*ss[j] * s1);
        A(j, 1) -= c * g2 * p2 * m(*ss[j] * s2);
        A(j, 2) -= c * lambda * m(*ss[j]);
        A(j, j) += 1.0;
        rhs[j] = c * g2 * lambda * m(*ss[j] * B);
    }
    A(2, 0) = -tau * tau * lambda * p1 * m(s1);
    A(2, 1) = -tau * tau * lambda * p2 * m(s2);
    A(2, 2) = 1.0 - tau * tau * gamma * m(st.K0.square());
    rhs[2] = tau * tau * lambda * lambda * m(B);
    const Eigen::Vector3d v = A.fullPivLu().solve(rhs);
    st.v1 = v[0];
    st.v2 = v[1];
    st.omega = v[2];
    st.u1 = st.v1 / lambda;
    st.u2 = st.v2 / lambda;
    st.Lprime = B + p1 * st.u1 * s1 + p2 * st.u2 * s2;

    const double r1 = std::abs(e1 * (1.0 + psi * tau * (s1 / st.K).mean()) - 1.0);
    const double r2 = std::abs(e2 * (1.0 + psi * tau * (s2 / st.K).mean()) - 1.0);
    const double rt = std::abs(tau * (1.0 + (st.K0 / st.K).mean()) - 1.0);
    const Eigen::Vector3d lin = A * v - rhs;
    const double scale = std::max(v.cwiseAbs().maxCoeff(), 1e-300);
    st.residual = std::max({r1, r2, rt, lin.cwiseAbs().maxCoeff() / scale});
    if (!(std::max({r1, r2, rt}) <= kResidualTolerance))
        throw SolverError("two-covariance (e1, e2, tau) system did not converge", std::max({r1, r2, rt}));
    return st;
}

inline GeneralProjectionsState solve_general_projections(const Spectrum& sigma1, const Spectrum& sigma2,
                                                         const ScalingRatios& ratios, double lambda,
                                                         const Spectrum& b_matrix, const SolverOptions& opts = {}) {
    return solve_general_projections(sigma1.values(), sigma2.values(), ratios, lambda, b_matrix.values(), opts);
}

// ---------------------------------------------------------------------------
// Ridgeless limits of the random-projection scalars.

struct RidgelessLimits {
    double theta0 = 0.0;
    double kappa0 = 0.0;
    double chi0 = 0.0;
    double tau0 = 0.0;
    double e0 = 0.0;
    double eta0 = 0.0;
};

// As lambda -> 0+, theta (1 - phi eta)(gamma - eta) -> 0 forces either
// theta0 = 0 (eta0 = 1) or eta(theta0) = min(gamma, 1/phi) < 1.
inline RidgelessLimits ridgeless_limits(const Spectrum& sigma, const ScalingRatios& ratios) {
    const double gamma = ratios.require_gamma();
    const double phi = ratios.phi;
    const double psi = phi * gamma;
    if (std::abs(psi - 1.0) < 1e-3) throw ThresholdError("ridgeless limit undefined at the threshold", psi);
    const Array& lam = sigma.values();

    RidgelessLimits out;
    out.eta0 = std::min({1.0, gamma, 1.0 / phi});
    if (out.eta0 < 1.0) {
        auto eta = [&](double th) { return (lam / (lam + th)).mean(); };
        double a = 0.0, b = 1.0;
        while (eta(b) > out.eta0) b *= 2.0;
        for (int i = 0; i < 400; ++i) {
            const double mid = 0.5 * (a + b);
            if (eta(mid) > out.eta0) a = mid;
            else b = mid;
            if (b - a <= 1e-16 * b) break;
        }
        out.theta0 = 0.5 * (a + b);
    }
    out.e0 = std::max(0.0, 1.0 - phi * out.eta0);
    out.tau0 = std::max(0.0, 1.0 - out.eta0 / gamma);
    out.chi0 = std::max(0.0, 1.0 - psi) * gamma * out.theta0;
    out.kappa0 = std::max(0.0, psi - 1.0) * out.theta0 / phi;
    return out;
}

// theta0 from solve_rp_core along lambda in {1e-4, 1e-6, 1e-8}, extrapolated
// linearly in lambda to 0 from the two smallest points.
inline double ridgeless_theta_continuation(const Spectrum& sigma, const ScalingRatios& ratios,
                                           const SolverOptions& opts = {}) {
    const double lams[3] = {1e-4, 1e-6, 1e-8};
    double th[3];
    for (int i = 0; i < 3; ++i) th[i] = solve_rp_core(sigma, ratios, lams[i], opts).theta;
    const double slope = (th[1] - th[2]) / (lams[1] - lams[2]);
    return th[2] - slope * lams[2];
}

}  // namespace collapse

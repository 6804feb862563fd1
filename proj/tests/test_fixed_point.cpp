#include <gtest/gtest.h>

#include <cmath>

#include "collapse/fixed_point.hpp"

using namespace collapse;

namespace {

// theta (gamma - eta)(1 - phi eta) = lambda with eta = 1/(1 + theta), the
// one-dimensional reduction of the (e, tau) system for Sigma = [1].
double scalar_theta(double phi, double gamma, double lambda) {
    auto f = [&](double th) {
        const double eta = 1.0 / (1.0 + th);
        return th * (gamma - eta) * (1.0 - phi * eta) - lambda;
    };
    double lo = 0.0, hi = 1.0;
    while (f(hi) < 0.0) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(FixedPoint, KappaGoldenRatio) {
    const ClassicalFixedPoint fp = solve_kappa(isotropic_spectrum(10), 10.0, 1.0);
    EXPECT_NEAR(fp.kappa, (1.0 + std::sqrt(5.0)) / 2.0, 1e-10);
    EXPECT_LE(fp.residual, kResidualTolerance);
}

TEST(FixedPoint, KappaOverParametrizedRidgeless) {
    // phi = 2: kappa -> phi - 1.
    const ClassicalFixedPoint fp = solve_kappa(isotropic_spectrum(200), 100.0, 1e-8);
    EXPECT_NEAR(fp.kappa, 1.0, 1e-6);
}

TEST(FixedPoint, KappaResidualAcrossRegimes) {
    const Spectrum s = build_power_law_spectrum(300, 1.0);
    for (double n : {30.0, 299.0, 300.0, 301.0, 3000.0})
        for (double lam : {1e-8, 1e-4, 1.0}) {
            const ClassicalFixedPoint fp = solve_kappa(s, n, lam);
            EXPECT_LE(fp.residual, kResidualTolerance) << n << " " << lam;
            EXPECT_GE(fp.kappa, lam);
            EXPECT_NEAR(fp.u, (fp.df2 / n) / (1.0 - fp.df2 / n), 1e-12 * std::max(1.0, fp.u));
        }
    EXPECT_THROW(solve_kappa(s, 100.0, 0.0), DomainError);
}

TEST(FixedPoint, ProjectionsScalarOracle) {
    const Spectrum s = isotropic_spectrum(1);
    for (double phi : {0.3, 2.0})
        for (double gamma : {0.5, 3.0})
            for (double lam : {1e-3, 0.1, 2.0}) {
                const RPCore core = solve_rp_core(s, ScalingRatios::projections(phi, gamma, 0.0), lam);
                const double th = scalar_theta(phi, gamma, lam);
                EXPECT_NEAR(core.theta, th, 1e-9 * std::max(1.0, th)) << phi << " " << gamma << " " << lam;
                const double eta = 1.0 / (1.0 + th);
                EXPECT_NEAR(core.e, 1.0 - phi * eta, 1e-9);
                EXPECT_NEAR(core.tau, 1.0 - eta / gamma, 1e-9);
            }
}

TEST(FixedPoint, ProjectionsResidualsAreSmall) {
    const Spectrum s = build_power_law_spectrum(200, 1.0);
    for (double phi : {0.2, 0.8, 1.5})
        for (double gamma : {0.25, 1.0, 4.0})
            for (double lam : {1e-8, 1e-3, 1.0}) {
                const RPCore core = solve_rp_core(s, ScalingRatios::projections(phi, gamma, 0.0), lam);
                const auto res = rp_core_residuals(s.values(), phi, gamma, lam, core.e, core.tau);
                EXPECT_LE(res.e, kResidualTolerance);
                EXPECT_LE(res.tau, kResidualTolerance);
                EXPECT_GT(core.e, 0.0);
                EXPECT_GT(core.tau, 0.0);
            }
}

TEST(FixedPoint, ProjectionsAtThresholdWithTinyRidge) {
    const Spectrum s = build_power_law_spectrum(200, 1.0);
    const RPCore core = solve_rp_core(s, ScalingRatios::projections(0.5, 2.0, 0.0), 1e-12);
    const auto res = rp_core_residuals(s.values(), 0.5, 2.0, 1e-12, core.e, core.tau);
    EXPECT_LE(res.e, kResidualTolerance);
    EXPECT_LE(res.tau, kResidualTolerance);
}

TEST(FixedPoint, WideProjectionsMatchClassicalAtScaledRidge) {
    const Spectrum s = build_power_law_spectrum(100, 1.0);
    const double phi = 0.5, gamma = 1e6, lam = 1e3;
    const RPCore core = solve_rp_core(s, ScalingRatios::projections(phi, gamma, 0.0), lam);
    const ClassicalFixedPoint fp = solve_kappa(s, 100.0 / phi, lam / gamma);
    EXPECT_NEAR(core.theta / fp.kappa, 1.0, 1e-5);
    EXPECT_NEAR(core.tau, 1.0, 1e-5);
}

TEST(FixedPoint, OverParametrizedRidgelessLimit) {
    const Spectrum s = isotropic_spectrum(100);
    const RPCore core = solve_rp_core(s, ScalingRatios::projections(2.0, 1.0, 0.0), 1e-10);
    EXPECT_LT(core.e, 1e-4);
    EXPECT_NEAR(core.tau, 0.5, 1e-4);
    const RidgelessLimits lim = ridgeless_limits(s, ScalingRatios::projections(2.0, 1.0, 0.0));
    EXPECT_NEAR(lim.e0, 0.0, 1e-15);
    EXPECT_NEAR(lim.tau0, 0.5, 1e-15);
    EXPECT_NEAR(lim.eta0, 0.5, 1e-15);
}

TEST(FixedPoint, RidgelessThetaAgreesWithContinuation) {
    const Spectrum s = build_power_law_spectrum(150, 1.0);
    for (auto [phi, gamma] : {std::pair{2.0, 1.0}, std::pair{0.5, 0.5}, std::pair{0.25, 8.0}}) {
        const auto r = ScalingRatios::projections(phi, gamma, 0.0);
        const double th0 = ridgeless_limits(s, r).theta0;
        const double cont = ridgeless_theta_continuation(s, r);
        EXPECT_NEAR(cont, th0, 1e-6 * std::max(th0, 1e-3)) << phi << " " << gamma;
    }
    EXPECT_THROW(ridgeless_limits(s, ScalingRatios::projections(0.5, 2.0005, 0.0)), ThresholdError);
}

TEST(FixedPoint, SecondOrderScalarsAgreeWithPicard) {
    const Spectrum s = build_power_law_spectrum(120, 1.0);
    for (double gamma : {0.5, 2.0, 6.0}) {
        const auto r = ScalingRatios::projections(0.6, gamma, 0.0);
        const RPCore core = solve_rp_core(s, r, 1e-2);
        const RPFixedPoint lin = solve_u_omega(s, r, 1e-2, core);
        const UOmegaPicard pic = picard_u_omega(s, r, 1e-2, core);
        EXPECT_NEAR(lin.u, pic.u, 1e-8 * std::max(1.0, pic.u));
        EXPECT_NEAR(lin.omega_prime, pic.omega_prime, 1e-8 * std::max(1.0, pic.omega_prime));
        EXPECT_LE(lin.residual_u, kResidualTolerance);
        EXPECT_LE(lin.residual_omega, kResidualTolerance);
        EXPECT_EQ(omega_prime_report(s, r, 1e-2).matching_variant, "I12");
    }
}

TEST(FixedPoint, SecondOrderScalarsUnderHeavyRidge) {
    // theta -> infinity: u -> 0 and omega' -> ntr Sigma / gamma.
    const Spectrum s = build_power_law_spectrum(80, 1.0);
    const RPFixedPoint fp = solve_rp(s, ScalingRatios::projections(0.5, 2.0, 0.0), 1e6);
    EXPECT_LT(fp.u, 1e-6);
    EXPECT_NEAR(fp.omega_prime, s.values().mean() / 2.0, 1e-6 * s.values().mean());
}

TEST(FixedPoint, WideProjectionsRecoverClassicalVarianceScalar) {
    const Spectrum s = build_power_law_spectrum(100, 1.0);
    const double lam = 1e3, gamma = 1e6;
    const RPFixedPoint fp = solve_rp(s, ScalingRatios::projections(0.5, gamma, 0.0), lam);
    const ClassicalFixedPoint cl = solve_kappa(s, 200.0, lam / gamma);
    EXPECT_NEAR(fp.u, cl.u, 1e-4 * cl.u);
    EXPECT_LT(fp.omega_prime, 1e-4);
}

TEST(FixedPoint, TwoEqualCovariancesReduceToSingle) {
    const Spectrum s = build_power_law_spectrum(100, 1.0);
    const double lam = 1e-3;
    const auto r = ScalingRatios::classical(0.5, 0.3);
    const GeneralClassicalState st = solve_general_classical(s.values(), s.values(), r, lam, s.values());
    const ClassicalFixedPoint fp = solve_kappa(s, 200.0, lam);
    EXPECT_NEAR(st.e1, st.e2, 1e-13);
    EXPECT_NEAR(lam / st.e1, fp.kappa, 1e-10 * fp.kappa);
    EXPECT_NEAR(st.u1, fp.u, 1e-9 * fp.u);
    EXPECT_NEAR(st.u2, fp.u, 1e-9 * fp.u);
}

TEST(FixedPoint, TwoEqualCovariancesReduceToSingleProjections) {
    const Spectrum s = build_power_law_spectrum(100, 1.0);
    const double lam = 1e-3;
    const auto r = ScalingRatios::projections(0.5, 1.5, 0.3);
    const GeneralProjectionsState st = solve_general_projections(s.values(), s.values(), r, lam, s.values());
    const RPCore core = solve_rp_core(s, r, lam);
    EXPECT_NEAR(st.e1, core.e, 1e-9);
    EXPECT_NEAR(st.e2, core.e, 1e-9);
    EXPECT_NEAR(st.tau, core.tau, 1e-9);
}

TEST(FixedPoint, SurrogateLimitOfManySamples) {
    // phi -> 0: e_j -> 1 and u_j -> 0.
    const Spectrum s1 = build_power_law_spectrum(50, 1.0);
    const Spectrum s2 = build_power_law_spectrum(50, 2.0);
    const GeneralClassicalState st =
        solve_general_classical(s1.values(), s2.values(), ScalingRatios::classical(1e-7, 0.5), 0.1, s1.values());
    EXPECT_NEAR(st.e1, 1.0, 1e-6);
    EXPECT_NEAR(st.e2, 1.0, 1e-6);
    EXPECT_LT(st.u1, 1e-6);
    EXPECT_LT(st.u2, 1e-6);
}

TEST(FixedPoint, NearThresholdFlag) {
    EXPECT_TRUE(near_threshold(1.005, 1e-8));
    EXPECT_FALSE(near_threshold(1.02, 1e-8));
    EXPECT_FALSE(near_threshold(1.0, 1e-3));
    EXPECT_TRUE(floor_lambda(0.0).floored);
    EXPECT_EQ(floor_lambda(0.0).value, kLambdaFloor);
    EXPECT_FALSE(floor_lambda(1e-12).floored);
}

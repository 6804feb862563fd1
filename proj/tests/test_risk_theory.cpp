#include <gtest/gtest.h>

#include "collapse/risk_theory.hpp"

using namespace collapse;

namespace {

MixtureModel isotropic_model(int d, double c2, double noise = 1.0) {
    MixtureModel m;
    m.sigma = isotropic_spectrum(d);
    m.gamma_prior = isotropic_prior(d, 1.0);
    m.delta = isotropic_shift(d, c2);
    m.noise1 = m.noise2 = noise;
    return m;
}

MixtureModel power_law_model(int d, double c2, double noise1 = 1.0, double noise2 = 1.0) {
    MixtureModel m;
    m.sigma = build_power_law_spectrum(d, 1.0).scaled(d);
    m.gamma_prior = isotropic_prior(d, 1.0);
    m.delta = inverse_covariance_shift(m.sigma, c2);
    m.noise1 = noise1;
    m.noise2 = noise2;
    return m;
}

}  // namespace

TEST(RiskTheory, NoShiftMeansNoCollapse) {
    const MixtureModel m = power_law_model(100, 0.0);
    EXPECT_EQ(classical_risk(m, ScalingRatios::classical(0.5, 0.4), 1e-3).collapse, 0.0);
    EXPECT_EQ(rp_risk(m, ScalingRatios::projections(0.5, 2.0, 0.4), 1e-3).collapse, 0.0);
}

TEST(RiskTheory, RealOnlyDataHasNoCollapse) {
    const MixtureModel m = power_law_model(100, 1.0);
    EXPECT_EQ(classical_risk(m, ScalingRatios::classical(0.5, 0.0), 1e-3).collapse, 0.0);
    EXPECT_EQ(rp_risk(m, ScalingRatios::projections(0.5, 2.0, 0.0), 1e-3).collapse, 0.0);
}

TEST(RiskTheory, IsotropicUnderParametrized) {
    const RiskDecomposition iso = isotropic_under_risk(0.5, 0.5, 1.0, 1.0);
    EXPECT_NEAR(iso.total, 1.5, 1e-15);
    const RiskDecomposition r = classical_risk(isotropic_model(200, 1.0), ScalingRatios::classical(0.5, 0.5), 1e-10);
    EXPECT_NEAR(r.bias, 0.0, 1e-8);
    EXPECT_NEAR(r.variance, 1.0, 1e-8);
    EXPECT_NEAR(r.collapse, 0.5, 1e-8);
}

TEST(RiskTheory, IsotropicOverParametrized) {
    const RiskDecomposition iso = isotropic_over_risk(2.0, 1.0, 1.0, 1.0, 1.0);
    EXPECT_NEAR(iso.bias, 0.5, 1e-15);
    EXPECT_NEAR(iso.variance, 1.0, 1e-15);
    EXPECT_NEAR(iso.collapse, 0.5, 1e-15);
    for (double p2 : {0.0, 0.3, 1.0}) {
        const RiskDecomposition r = classical_risk(isotropic_model(400, 1.0), ScalingRatios::classical(2.0, p2), 1e-10);
        const RiskDecomposition o = isotropic_over_risk(2.0, p2, 1.0, 1.0, 1.0);
        EXPECT_NEAR(r.bias, o.bias, 1e-7);
        EXPECT_NEAR(r.variance, o.variance, 1e-7);
        EXPECT_NEAR(r.collapse, o.collapse, 1e-7);
    }
}

TEST(RiskTheory, VarianceIsNoiseTimesU) {
    const MixtureModel m = power_law_model(150, 0.3, 0.5, 2.0);
    for (double phi : {0.1, 0.7, 1.8}) {
        const auto r = ScalingRatios::classical(phi, 0.25);
        const RiskDecomposition d = classical_risk(m, r, 1e-3);
        EXPECT_NEAR(d.variance, m.pooled_noise(r) * d.scalars.u, 1e-15 * d.variance);
        EXPECT_NEAR(d.total, d.bias + d.variance + d.collapse, 1e-15 * d.total);
    }
}

TEST(RiskTheory, WideProjectionsMatchClassicalAtScaledRidge) {
    const MixtureModel m = power_law_model(100, 0.5);
    const double gamma = 1e6, lam = 1e3;
    for (double phi : {0.3, 0.8}) {
        const RiskDecomposition rp = rp_risk(m, ScalingRatios::projections(phi, gamma, 0.4), lam);
        const RiskDecomposition cl = classical_risk(m, ScalingRatios::classical(phi, 0.4), lam / gamma);
        EXPECT_NEAR(rp.bias, cl.bias, 1e-3 * cl.bias);
        EXPECT_NEAR(rp.variance, cl.variance, 1e-3 * cl.variance);
        EXPECT_NEAR(rp.collapse, cl.collapse, 1e-3 * cl.collapse);
    }
}

TEST(RiskTheory, InterpolationPeakAtUnitPsi) {
    // Fewer samples than dimensions, so that m = n is reachable with m < d.
    const MixtureModel m = isotropic_model(200, 0.5);
    const double phi = 2.0;
    auto total = [&](double psi) {
        return rp_risk(m, ScalingRatios::projections(phi, psi / phi, 0.2), 1e-8).total;
    };
    const double peak = total(1.0);
    EXPECT_GE(peak / total(0.25), 10.0);
    EXPECT_GE(peak / total(4.0), 10.0);
    EXPECT_TRUE(rp_risk(m, ScalingRatios::projections(phi, 0.5, 0.2), 1e-8).flags.near_threshold);
}

TEST(RiskTheory, CollapseTermVariants) {
    const MixtureModel m = power_law_model(100, 1.0);
    const auto full = ScalingRatios::projections(0.5, 3.0, 1.0);
    EXPECT_NEAR(rp_risk(m, full, 1e-2, std::nullopt, RPFormula::corrected).collapse,
                rp_risk(m, full, 1e-2, std::nullopt, RPFormula::displayed).collapse, 1e-14);
    const auto half = ScalingRatios::projections(0.5, 3.0, 0.5);
    EXPECT_LT(rp_risk(m, half, 1e-2, std::nullopt, RPFormula::corrected).collapse,
              rp_risk(m, half, 1e-2, std::nullopt, RPFormula::displayed).collapse);
}

TEST(RiskTheory, RidgeFloorIsReported) {
    const MixtureModel m = power_law_model(50, 0.0);
    EXPECT_TRUE(classical_risk(m, ScalingRatios::classical(0.5, 0.0), 0.0).flags.lambda_floored);
    EXPECT_FALSE(classical_risk(m, ScalingRatios::classical(0.5, 0.0), 1e-3).flags.lambda_floored);
    EXPECT_THROW(classical_risk(m, ScalingRatios::classical(0.5, 0.0), -1.0), DomainError);
}

TEST(RiskTheory, WeightedMixingEndpoints) {
    const double phi = 0.1, p2 = 0.3, s1 = 1.0, s2 = 2.0, c2 = 0.5;
    EXPECT_NEAR(weighted_mixing_risk(0.0, phi, p2, s1, s2, c2), (1 - p2) * s1 * phi, 1e-15);
    EXPECT_NEAR(weighted_mixing_risk(1.0, phi, p2, s1, s2, c2), p2 * p2 * c2 + p2 * s2 * phi, 1e-15);
    // Without a shift the risk is linear in alpha.
    const double a = weighted_mixing_risk(0.0, phi, p2, s1, s2, 0.0);
    const double b = weighted_mixing_risk(1.0, phi, p2, s1, s2, 0.0);
    EXPECT_NEAR(weighted_mixing_risk(0.4, phi, p2, s1, s2, 0.0), 0.6 * a + 0.4 * b, 1e-15);
}

TEST(RiskTheory, OptimalWeightCorners) {
    // Equal sources with a shift: only real data.
    EXPECT_NEAR(optimal_mixing_weight(0.01, 0.5, 1.0, 1.0, 1.0).alpha_star, 0.0, 1e-12);
    // No shift and cleaner synthetic labels: only synthetic data.
    EXPECT_NEAR(optimal_mixing_weight(0.01, 0.5, 1.0, 0.25, 0.0).alpha_star, 1.0, 1e-12);
}

TEST(RiskTheory, ExactWeightedRiskAtSampleShareIsPooledFit) {
    const MixtureModel m = power_law_model(80, 0.4, 1.0, 1.0);
    const auto r = ScalingRatios::classical(0.4, 0.3);
    const RiskDecomposition w = weighted_mixing_risk_exact(0.3, m, r, 1e-3);
    const RiskDecomposition c = classical_risk(m, r, 1e-3);
    EXPECT_NEAR(w.bias, c.bias, 1e-9 * c.bias);
    EXPECT_NEAR(w.variance, c.variance, 1e-9 * c.variance);
    EXPECT_NEAR(w.collapse, c.collapse, 1e-9 * c.collapse);
    EXPECT_THROW(weighted_mixing_risk_exact(0.5, m, ScalingRatios::classical(0.4, 0.0), 1e-3), DomainError);
}

TEST(RiskTheory, IterativeMixingTraces) {
    const IterativeTrace flat = iterative_mixing(1.0, 0.0, 1.0, 0.1, 5);
    for (double e : flat.risk_sequence) EXPECT_NEAR(e, 0.1 / 0.9, 1e-15);

    const IterativeTrace grow = iterative_mixing(1.0, 1.0, 1.0, 0.1, 5, BaselineForm::leading_order);
    for (int t = 1; t <= 5; ++t) EXPECT_NEAR(grow.risk_sequence[t - 1], 1.0 + 0.1 * t, 1e-14);

    const IterativeTrace mid = iterative_mixing(1.0, 0.5, 1.0, 0.1, 3, BaselineForm::leading_order);
    // 0.1 + 0.25 (0.1 + 0.25 (0.1 + 0.25))
    EXPECT_NEAR(mid.risk_sequence[2], 0.1 + 0.25 * (0.1 + 0.25 * 0.35), 1e-15);
    EXPECT_LE(mid.max_closed_form_gap, 1e-12);
    EXPECT_THROW(iterative_mixing(1.0, 0.5, 1.0, 1.5, 3), DomainError);
}

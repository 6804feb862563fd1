#include <gtest/gtest.h>

#include "collapse/spectra.hpp"

using namespace collapse;

TEST(Spectra, MomentOfIdentityAtUnitShift) {
    const Spectrum s = isotropic_spectrum(50);
    EXPECT_NEAR(spectral_moment(s, 1, 1, 1.0, true), 0.5, 1e-15);
    EXPECT_NEAR(spectral_moment(s, 1, 1, 1.0, false), 25.0, 1e-12);
}

TEST(Spectra, EqualPowersWithoutShiftCountDimensions) {
    const Spectrum s = build_power_law_spectrum(37, 1.3);
    EXPECT_NEAR(spectral_moment(s, 2, 2, 0.0, false), 37.0, 1e-12);
    EXPECT_NEAR(spectral_moment(s, 2, 2, 0.0, true), 1.0, 1e-14);
}

TEST(Spectra, PowerLawSmallCase) {
    const Spectrum s = build_power_law_spectrum(4, 1.0);
    const double expected[4] = {0.48, 0.24, 0.16, 0.12};
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(s[j], expected[j], 1e-15);
    // Exact rational sum of lambda_j / (lambda_j + 1).
    EXPECT_NEAR(spectral_moment(s, 1, 1, 1.0, false), 0.7629466030467142, 1e-14);
    EXPECT_NEAR(spectral_moment(s, 1, 1, 1.0, true), 0.19073665076167856, 1e-15);
}

TEST(Spectra, PowerLawTraceAndOrdering) {
    EXPECT_NEAR(build_power_law_spectrum(1)[0], 1.0, 1e-15);
    const Spectrum s = build_power_law_spectrum(600, 1.0);
    EXPECT_NEAR(s.trace(), 1.0, 1e-12);
    for (Eigen::Index j = 1; j < s.dim(); ++j) EXPECT_LT(s[j], s[j - 1]);
}

TEST(Spectra, DegreesOfFreedomDecreaseWithShift) {
    const Spectrum s = build_power_law_spectrum(100, 1.0);
    double prev = degrees_of_freedom(s, 1, 1e-6);
    EXPECT_LE(prev, 100.0);
    for (double t : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        const double df = degrees_of_freedom(s, 1, t);
        EXPECT_LT(df, prev);
        prev = df;
    }
    EXPECT_GE(degrees_of_freedom(s, 1, 0.1), degrees_of_freedom(s, 2, 0.1));
}

TEST(Spectra, RejectsInvalidSpectra) {
    EXPECT_THROW(Spectrum(std::vector<double>{}), DomainError);
    EXPECT_THROW(Spectrum(std::vector<double>{1.0, -0.1}), DomainError);
    EXPECT_THROW(Spectrum(std::vector<double>{1.0, 0.0}), DomainError);
    EXPECT_THROW(Spectrum(std::vector<double>{1.0, std::nan("")}), DomainError);
    EXPECT_NO_THROW(Spectrum(std::vector<double>{1.0, 0.0}, SpectrumRole::shift_prior));
}

TEST(Spectra, IsotropicPriorsScaleByDimension) {
    const Spectrum g = isotropic_prior(8, 2.0);
    EXPECT_NEAR(g.trace(), 2.0, 1e-15);
    const Spectrum sigma = build_power_law_spectrum(30, 1.0);
    const Spectrum delta = inverse_covariance_shift(sigma, 0.7);
    EXPECT_NEAR((sigma.values() * delta.values()).sum(), 0.7, 1e-12);
}

TEST(Spectra, CollapseLoopsAccumulateShift) {
    const Spectrum sigma = isotropic_spectrum(10);
    const Spectrum none = classical_collapse_delta({}, sigma);
    EXPECT_EQ(none.trace(), 0.0);

    const Spectrum one = classical_collapse_delta({{1.0, 0.5}}, sigma);
    for (Eigen::Index j = 0; j < 10; ++j) EXPECT_NEAR(one[j], 0.1, 1e-15);

    const Spectrum two = classical_collapse_delta({{1.0, 1.0 / 3.0}, {1.0, 1.0 / 3.0}}, sigma);
    EXPECT_NEAR((sigma.values() * two.values()).sum(), 1.0, 1e-14);

    EXPECT_THROW(classical_collapse_delta({{1.0, 1.0}}, sigma), DomainError);
    EXPECT_THROW(classical_collapse_delta({{1.0, 0.0}}, sigma), DomainError);
}

TEST(Spectra, MixtureQualityIsTraceOfProduct) {
    MixtureModel model;
    model.sigma = build_power_law_spectrum(20, 1.0);
    model.gamma_prior = isotropic_prior(20, 1.0);
    model.delta = inverse_covariance_shift(model.sigma, 0.36);
    EXPECT_NEAR(model.quality(), 0.36, 1e-13);
    EXPECT_NO_THROW(model.validate());
    model.delta = isotropic_shift(10, 1.0);
    EXPECT_THROW(model.validate(), DomainError);
}

TEST(Spectra, ScalingRatiosValidate) {
    EXPECT_THROW(ScalingRatios::classical(0.0, 0.1), DomainError);
    EXPECT_THROW(ScalingRatios::classical(0.5, 1.5), DomainError);
    EXPECT_THROW(ScalingRatios::projections(0.5, -1.0, 0.1), DomainError);
    const auto r = ScalingRatios::projections(0.5, 4.0, 0.2);
    EXPECT_DOUBLE_EQ(*r.psi, 2.0);
    EXPECT_DOUBLE_EQ(r.p1(), 0.8);
    EXPECT_THROW(ScalingRatios::classical(0.5, 0.1).require_gamma(), DomainError);
}

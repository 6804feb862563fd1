#pragma once

// Diagonal spectra, mixture models and scaling regimes.
// Every matrix in the theory is diagonal in a shared basis, so it is stored
// as its eigenvalue array.

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "collapse/errors.hpp"

namespace collapse {

using Array = Eigen::ArrayXd;

enum class SpectrumRole { covariance, signal_prior, shift_prior };

class Spectrum {
public:
    Spectrum() = default;

    Spectrum(Array values, SpectrumRole role = SpectrumRole::covariance)
        : values_(std::move(values)), role_(role) {
        if (values_.size() < 1) throw DomainError("spectrum must have dimension >= 1");
        for (Eigen::Index j = 0; j < values_.size(); ++j) {
            const double v = values_[j];
            if (!std::isfinite(v) || v < 0.0)
                throw DomainError("spectrum eigenvalues must be finite and nonnegative");
            if (role_ == SpectrumRole::covariance && v == 0.0)
                throw DomainError("covariance spectrum must be positive definite");
        }
    }

    Spectrum(const std::vector<double>& values, SpectrumRole role = SpectrumRole::covariance)
        : Spectrum(Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size())), role) {}

    const Array& values() const { return values_; }
    Eigen::Index dim() const { return values_.size(); }
    SpectrumRole role() const { return role_; }
    double trace() const { return values_.sum(); }
    double operator[](Eigen::Index j) const { return values_[j]; }

    std::vector<double> to_vector() const { return {values_.data(), values_.data() + values_.size()}; }

    Spectrum scaled(double factor) const {
        Spectrum out;
        out.values_ = values_ * factor;
        out.role_ = role_;
        return out;
    }

    static Spectrum zeros(Eigen::Index d, SpectrumRole role) {
        Spectrum out;
        out.values_ = Array::Zero(d);
        out.role_ = role;
        return out;
    }

private:
    Array values_;
    SpectrumRole role_ = SpectrumRole::covariance;
};

// Asymptotic regime: phi = d/n, synthetic fraction p2, and for random
// projections gamma = m/d and psi = m/n = phi * gamma.
struct ScalingRatios {
    double phi = 0.5;
    double p2 = 0.0;
    std::optional<double> gamma;
    std::optional<double> psi;

    double p1() const { return 1.0 - p2; }

    static ScalingRatios classical(double phi, double p2) {
        ScalingRatios r;
        r.phi = phi;
        r.p2 = p2;
        r.validate();
        return r;
    }

    static ScalingRatios projections(double phi, double gamma, double p2) {
        ScalingRatios r;
        r.phi = phi;
        r.p2 = p2;
        r.gamma = gamma;
        r.psi = phi * gamma;
        r.validate();
        return r;
    }

    bool has_projections() const { return gamma.has_value(); }

    double require_gamma() const {
        if (!gamma) throw DomainError("scaling ratios carry no gamma (random projections)");
        return *gamma;
    }

    void validate() const {
        if (!(phi > 0.0) || !std::isfinite(phi)) throw DomainError("phi must be positive");
        if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("p2 must lie in [0, 1]");
        if (gamma.has_value() != psi.has_value())
            throw DomainError("gamma and psi must be given together");
        if (gamma) {
            if (!(*gamma > 0.0) || !std::isfinite(*gamma)) throw DomainError("gamma must be positive");
            if (std::abs(*psi - phi * *gamma) > 1e-12 * std::max(1.0, std::abs(*psi)))
                throw DomainError("psi must equal phi * gamma");
        }
    }
};

// Real distribution (Sigma, Gamma prior on w1*), synthetic shift prior Delta
// on w2* - w1*, and per-source label noise variances.
struct MixtureModel {
    Spectrum sigma;
    Spectrum gamma_prior;
    Spectrum delta;
    double noise1 = 1.0;  // sigma_1^2
    double noise2 = 1.0;  // sigma_2^2

    Eigen::Index dim() const { return sigma.dim(); }

    // c^2 = tr(Sigma Delta).
    double quality() const { return (sigma.values() * delta.values()).sum(); }

    double pooled_noise(const ScalingRatios& r) const { return r.p1() * noise1 + r.p2 * noise2; }

    void validate() const {
        if (sigma.role() != SpectrumRole::covariance) throw DomainError("sigma must be a covariance spectrum");
        if (gamma_prior.dim() != sigma.dim() || delta.dim() != sigma.dim())
            throw DomainError("all spectra of a model must share the same dimension");
        if (noise1 < 0.0 || noise2 < 0.0) throw DomainError("noise variances must be nonnegative");
    }
};

struct IsotropicParams {
    double r2 = 1.0;
    double c2 = 0.0;
};

// sum_j lambda_j^k / (lambda_j + t)^l, divided by d when normalized.
inline double spectral_moment(const Spectrum& sigma, int k, int l, double t, bool normalized) {
    if (k < 0 || l < 0) throw DomainError("moment orders must be nonnegative");
    if (t < 0.0) throw DomainError("moment shift must be nonnegative");
    const Array& lam = sigma.values();
    double total = 0.0;
    for (Eigen::Index j = 0; j < lam.size(); ++j) {
        const double den = lam[j] + t;
        if (l > 0 && den == 0.0) throw DomainError("singular spectral moment (zero eigenvalue at t = 0)");
        total += std::pow(lam[j], k) / std::pow(den, l);
    }
    return normalized ? total / static_cast<double>(lam.size()) : total;
}

// df_k(t) = tr Sigma^k (Sigma + t)^-k.
inline double degrees_of_freedom(const Spectrum& sigma, int k, double t) {
    return spectral_moment(sigma, k, k, t, false);
}

// lambda_j = C / j^exponent with trace 1.
inline Spectrum build_power_law_spectrum(Eigen::Index d, double exponent = 1.0) {
    if (d < 1) throw DomainError("power-law spectrum needs d >= 1");
    Array lam(d);
    for (Eigen::Index j = 0; j < d; ++j) lam[j] = std::pow(static_cast<double>(j + 1), -exponent);
    lam /= lam.sum();
    return Spectrum(lam, SpectrumRole::covariance);
}

inline Spectrum isotropic_spectrum(Eigen::Index d, double level = 1.0, SpectrumRole role = SpectrumRole::covariance) {
    if (d < 1) throw DomainError("spectrum needs d >= 1");
    return Spectrum(Array::Constant(d, level), role);
}

// Gamma = (r2/d) I.
inline Spectrum isotropic_prior(Eigen::Index d, double r2) {
    return Spectrum(Array::Constant(d, r2 / static_cast<double>(d)), SpectrumRole::signal_prior);
}

// Delta = (c2/d) I.
inline Spectrum isotropic_shift(Eigen::Index d, double c2) {
    return Spectrum(Array::Constant(d, c2 / static_cast<double>(d)), SpectrumRole::shift_prior);
}

// Delta = (c2/d) Sigma^-1, so that tr(Sigma Delta) = c2.
inline Spectrum inverse_covariance_shift(const Spectrum& sigma, double c2) {
    const double d = static_cast<double>(sigma.dim());
    return Spectrum(Array((c2 / d) * sigma.values().inverse()), SpectrumRole::shift_prior);
}

// One stage of a classical-collapse pipeline: label noise variance and the
// d/n ratio of the stage.
struct CollapseLoop {
    double noise = 1.0;
    double phi = 0.5;
};

// Shift prior accumulated by repeatedly refitting on data labelled by the
// previous generation: Delta = (sum_l noise_l phi_l/(1-phi_l) / d) Sigma^-1.
inline Spectrum classical_collapse_delta(const std::vector<CollapseLoop>& loops, const Spectrum& sigma) {
    double c2 = 0.0;
    for (const auto& loop : loops) {
        if (!(loop.phi > 0.0 && loop.phi < 1.0))
            throw DomainError("each stage needs 0 < phi < 1 (more samples than dimensions)");
        if (loop.noise < 0.0) throw DomainError("stage noise must be nonnegative");
        c2 += loop.noise * loop.phi / (1.0 - loop.phi);
    }
    if (loops.empty()) return Spectrum::zeros(sigma.dim(), SpectrumRole::shift_prior);
    return inverse_covariance_shift(sigma, c2);
}

}  // namespace collapse

#pragma once

// Deterministic equivalents of the resolvent trace functionals r1..r5 for
// two (possibly unequal) diagonal covariances. With M_j = X_j^T X_j / n and
// Q the (projected) resolvent:
//   r1_j(A)    = E tr A M_j Q
//   r2(A, B)   = E tr A Q B Q
//   r3_j(A, B) = E tr A M_j Q B Q M_j
//   r4_j(A, B) = E tr A M_j Q B Q
//   r5(A, B)   = E tr A M_1 Q B Q M_2

#include <optional>

#include "collapse/errors.hpp"
#include "collapse/fixed_point.hpp"
#include "collapse/spectra.hpp"

namespace collapse {

enum class FunctionalKind { r1, r2, r3, r4, r5 };
enum class ModelClass { classical, projections };

struct FunctionalRequest {
    FunctionalKind kind = FunctionalKind::r1;
    int source_index = 1;
    Array a_matrix;
    std::optional<Array> b_matrix;
    ModelClass model_class = ModelClass::classical;

    void validate(Eigen::Index d) const {
        if (source_index != 1 && source_index != 2) throw DomainError("source index must be 1 or 2");
        if (a_matrix.size() != d) throw DomainError("A must match the spectrum dimension");
        if (kind != FunctionalKind::r1) {
            if (!b_matrix) throw DomainError("functionals r2..r5 need a B matrix");
            if (b_matrix->size() != d) throw DomainError("B must match the spectrum dimension");
        }
    }
};

// Solved scalars in the shape shared by both model classes. The classical
// model is the special case gamma = tau = 1, omega = 0.
struct EquivalentsView {
    double e[2] = {1.0, 1.0};
    double u[2] = {0.0, 0.0};
    double p[2] = {1.0, 0.0};
    double tau = 1.0;
    double gamma = 1.0;
    double omega = 0.0;
    double lambda = 0.0;
    Array K;
    Array Lprime;
};

inline EquivalentsView view_of(const GeneralClassicalState& st) {
    EquivalentsView v;
    v.e[0] = st.e1;
    v.e[1] = st.e2;
    v.u[0] = st.u1;
    v.u[1] = st.u2;
    v.p[0] = st.p1;
    v.p[1] = st.p2;
    v.lambda = st.lambda;
    v.K = st.K;
    v.Lprime = st.Lprime;
    return v;
}

inline EquivalentsView view_of(const GeneralProjectionsState& st) {
    EquivalentsView v;
    v.e[0] = st.e1;
    v.e[1] = st.e2;
    v.u[0] = st.u1;
    v.u[1] = st.u2;
    v.p[0] = st.p1;
    v.p[1] = st.p2;
    v.tau = st.tau;
    v.gamma = st.gamma;
    v.omega = st.omega;
    v.lambda = st.lambda;
    v.K = st.K;
    v.Lprime = st.Lprime;
    return v;
}

// C_j of the r3 formula.
inline Array c_matrix(const EquivalentsView& v, int j, const Array& s_j, const Array& s_o, const Array& B) {
    const int a = j - 1, b = 1 - a;
    const double g = v.gamma, t = v.tau;
    return g * v.p[a] * v.e[a] * v.e[a] * (g * t * t * (B + v.p[b] * v.u[b] * s_o) + v.omega) * s_j +
           v.u[a] * (g * t * v.p[b] * v.e[b] * s_o + v.lambda).square();
}

// D_j of the r4 formula.
inline Array d_matrix(const EquivalentsView& v, int j, const Array& s_o, const Array& B) {
    const int a = j - 1, b = 1 - a;
    const double g = v.gamma, t = v.tau;
    return g * t * t * v.e[a] * B + (v.e[a] * v.omega - t * v.lambda * v.u[a]) +
           g * t * t * v.p[b] * (v.e[a] * v.u[b] - v.e[b] * v.u[a]) * s_o;
}

// Closed-form assembly shared by both model classes. For r5 this is the
// direct formula; classical_functional uses the expansion identity instead.
inline double assemble_functional(FunctionalKind kind, int j, const Array& A, const Array* B, const EquivalentsView& v,
                                  const Array& s1, const Array& s2) {
    const Array& s_j = j == 1 ? s1 : s2;
    const Array& s_o = j == 1 ? s2 : s1;
    const int a = j - 1;
    const double g = v.gamma, t = v.tau;
    const Array K2inv = v.K.square().inverse();
    switch (kind) {
        case FunctionalKind::r1:
            return g * t * v.p[a] * v.e[a] * (A * s_j / v.K).sum();
        case FunctionalKind::r2:
            return g * (A * (g * t * t * v.Lprime + v.omega) * K2inv).sum();
        case FunctionalKind::r3:
            return v.p[a] * (A * s_j * c_matrix(v, j, s_j, s_o, *B) * K2inv).sum();
        case FunctionalKind::r4:
            return g * v.p[a] * (A * s_j * d_matrix(v, j, s_o, *B) * K2inv).sum();
        case FunctionalKind::r5: {
            const Array AS = A * s1 * s2;
            return v.p[0] * v.p[1] *
                   (v.e[0] * v.e[1] * g * (AS * (g * t * t * v.Lprime + v.omega) * K2inv).sum() -
                    (v.u[0] * v.e[1] + v.u[1] * v.e[0]) * g * t * (AS / v.K).sum());
        }
    }
    return 0.0;
}

// Classical r5 from tr A M Q B Q M with M = M_1 + M_2 and M Q = I - lambda Q:
//   2 r5 = tr AB - 2 lambda tr AB K^-1 + lambda^2 r2 - r3_1 - r3_2.
inline double classical_r5_expansion(const Array& A, const Array& B, const EquivalentsView& v, const Array& s1,
                                     const Array& s2) {
    const double lam = v.lambda;
    const double r2 = assemble_functional(FunctionalKind::r2, 1, A, &B, v, s1, s2);
    const double r31 = assemble_functional(FunctionalKind::r3, 1, A, &B, v, s1, s2);
    const double r32 = assemble_functional(FunctionalKind::r3, 2, A, &B, v, s1, s2);
    return 0.5 * ((A * B).sum() - 2.0 * lam * (A * B / v.K).sum() + lam * lam * r2 - r31 - r32);
}

inline double classical_functional(const FunctionalRequest& req, const Array& s1, const Array& s2,
                                   const ScalingRatios& ratios, double lambda, const SolverOptions& opts = {}) {
    req.validate(s1.size());
    const Array B = req.b_matrix ? *req.b_matrix : Array::Zero(s1.size());
    const EquivalentsView v = view_of(solve_general_classical(s1, s2, ratios, lambda, B, opts));
    if (req.kind == FunctionalKind::r5) return classical_r5_expansion(req.a_matrix, B, v, s1, s2);
    return assemble_functional(req.kind, req.source_index, req.a_matrix, &B, v, s1, s2);
}

inline double classical_functional(const FunctionalRequest& req, const Spectrum& sigma1, const Spectrum& sigma2,
                                   const ScalingRatios& ratios, double lambda, const SolverOptions& opts = {}) {
    return classical_functional(req, sigma1.values(), sigma2.values(), ratios, lambda, opts);
}

inline double projections_functional(const FunctionalRequest& req, const Array& s1, const Array& s2,
                                     const ScalingRatios& ratios, double lambda, const SolverOptions& opts = {}) {
    req.validate(s1.size());
    const Array B = req.b_matrix ? *req.b_matrix : Array::Zero(s1.size());
    const EquivalentsView v = view_of(solve_general_projections(s1, s2, ratios, lambda, B, opts));
    return assemble_functional(req.kind, req.source_index, req.a_matrix, &B, v, s1, s2);
}

inline double projections_functional(const FunctionalRequest& req, const Spectrum& sigma1, const Spectrum& sigma2,
                                     const ScalingRatios& ratios, double lambda, const SolverOptions& opts = {}) {
    return projections_functional(req, sigma1.values(), sigma2.values(), ratios, lambda, opts);
}

// Forms as displayed before correction, kept for discrepancy reports:
// r3 with an extra gamma, D_j with tau^2 e_j B, r5 as tr A E K^-2 with
// E = gamma (gamma tau^2 B + omega).
inline double projections_functional_displayed(const FunctionalRequest& req, const Array& s1, const Array& s2,
                                               const ScalingRatios& ratios, double lambda,
                                               const SolverOptions& opts = {}) {
    req.validate(s1.size());
    const Array B = req.b_matrix ? *req.b_matrix : Array::Zero(s1.size());
    const EquivalentsView v = view_of(solve_general_projections(s1, s2, ratios, lambda, B, opts));
    const int j = req.source_index, a = j - 1, b = 1 - a;
    const Array& s_j = j == 1 ? s1 : s2;
    const Array& s_o = j == 1 ? s2 : s1;
    const Array& A = req.a_matrix;
    const double g = v.gamma, t = v.tau;
    const Array K2inv = v.K.square().inverse();
    switch (req.kind) {
        case FunctionalKind::r3:
            return g * v.p[a] * (A * s_j * c_matrix(v, j, s_j, s_o, B) * K2inv).sum();
        case FunctionalKind::r4: {
            const Array D = t * t * v.e[a] * B + (v.e[a] * v.omega - t * v.lambda * v.u[a]) +
                            g * t * t * v.p[b] * (v.e[a] * v.u[b] - v.e[b] * v.u[a]) * s_o;
            return g * v.p[a] * (A * s_j * D * K2inv).sum();
        }
        case FunctionalKind::r5:
            return (A * g * (g * t * t * B + v.omega) * K2inv).sum();
        default:
            return assemble_functional(req.kind, j, A, &B, v, s1, s2);
    }
}

}  // namespace collapse

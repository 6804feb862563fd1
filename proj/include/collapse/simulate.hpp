#pragma once

// Monte Carlo ground truth: Gaussian mixtures of real and synthetic data,
// ridge / random-projection / weighted fits, exact conditional test error,
// iterative bootstrapped mixing and resolvent-functional estimators.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "collapse/detequiv.hpp"
#include "collapse/errors.hpp"
#include "collapse/spectra.hpp"

namespace collapse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Keyed random streams. Every draw is addressed by (seed, scenario, trial,
// role, extra), so results do not depend on execution order.

enum class StreamRole : std::uint64_t { data = 1, projection = 2, noise = 3, prior = 4 };

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t scenario, std::uint64_t trial, StreamRole role,
                                   std::uint64_t extra = 0) {
    const std::uint64_t parts[5] = {seed, scenario, trial, static_cast<std::uint64_t>(role), extra};
    std::vector<std::uint32_t> words;
    for (std::uint64_t p : parts) {
        words.push_back(static_cast<std::uint32_t>(p & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t scenario = 0;
    std::uint64_t trial = 0;

    std::mt19937_64 stream(StreamRole role, std::uint64_t extra = 0) const {
        return make_stream(seed, scenario, trial, role, extra);
    }
};

// FNV-1a, used to turn scenario names into stream keys.
inline std::uint64_t scenario_id(const std::string& name) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Rows x_i = sqrt(Sigma) z_i, generated row after row so that a shorter
// sample is a prefix of a longer one.
inline void fill_rows(Matrix& X, const Array& sqrt_sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = sqrt_sigma[j] * nd(rng);
}

inline Vector draw_gaussian(const Array& variances, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Vector v(variances.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = std::sqrt(variances[j]) * nd(rng);
    return v;
}

inline Vector draw_standard(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
    return v;
}

// ---------------------------------------------------------------------------

struct Dataset {
    Matrix x_real;
    Vector y_real;
    Matrix x_syn;
    Vector y_syn;
    Vector w1_star;
    Vector w2_star;

    Eigen::Index n1() const { return x_real.rows(); }
    Eigen::Index n2() const { return x_syn.rows(); }
    Eigen::Index dim() const { return w1_star.size(); }
};

struct SimRun {
    Vector fitted;
    double test_error = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t trial_index = 0;
};

// w1* ~ N(0, Gamma) and delta ~ N(0, Delta) from the prior stream.
struct Targets {
    Vector w1;
    Vector delta;
};

inline Targets draw_targets(const MixtureModel& model, const StreamKey& key) {
    auto rng = key.stream(StreamRole::prior);
    Targets t;
    t.w1 = draw_gaussian(model.gamma_prior.values(), rng);
    t.delta = draw_gaussian(model.delta.values(), rng);
    return t;
}

inline Dataset sample_dataset(const MixtureModel& model, Eigen::Index n1, Eigen::Index n2, const StreamKey& key) {
    model.validate();
    if (n1 < 0 || n2 < 0 || n1 + n2 < 1) throw DomainError("dataset needs n1 + n2 >= 1");
    const Eigen::Index d = model.dim();
    const Targets t = draw_targets(model, key);
    Dataset ds;
    ds.w1_star = t.w1;
    ds.w2_star = model.delta.values().isZero(0.0) ? t.w1 : Vector(t.w1 + t.delta);

    Matrix X(n1 + n2, d);
    auto data = key.stream(StreamRole::data);
    fill_rows(X, model.sigma.values().sqrt(), data);
    auto noise = key.stream(StreamRole::noise);
    const Vector z = draw_standard(n1 + n2, noise);

    ds.x_real = X.topRows(n1);
    ds.x_syn = X.bottomRows(n2);
    ds.y_real = ds.x_real * ds.w1_star + std::sqrt(model.noise1) * z.head(n1);
    ds.y_syn = ds.x_syn * ds.w2_star + std::sqrt(model.noise2) * z.tail(n2);
    return ds;
}

inline Dataset sample_dataset(const MixtureModel& model, Eigen::Index n1, Eigen::Index n2, std::uint64_t seed) {
    return sample_dataset(model, n1, n2, StreamKey{seed, 0, 0});
}

// sum_j lambda_j (fitted_j - w1_j)^2.
inline double test_error(const Vector& fitted, const Vector& w1, const Array& sigma) {
    return (sigma * (fitted - w1).array().square()).sum();
}

enum class SolverPath { automatic, primal, dual };

// Minimizes ||X w - y||^2 / n + lambda ||w||^2 through the p x p normal
// equations (primal) or the n x n kernel system (dual).
inline Vector ridge_solve(const Matrix& X, const Vector& y, double lambda, SolverPath path = SolverPath::automatic) {
    if (!(lambda > 0.0)) throw DomainError("ridge needs lambda > 0");
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n == 0) return Vector::Zero(p);
    const double nl = static_cast<double>(n) * lambda;
    const bool primal = path == SolverPath::primal || (path == SolverPath::automatic && p <= n);
    Matrix A;
    if (primal) {
        A = Matrix::Zero(p, p);
        A.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    } else {
        A = Matrix::Zero(n, n);
        A.selfadjointView<Eigen::Lower>().rankUpdate(X);
    }
    A.diagonal().array() += nl;
    Eigen::LLT<Matrix> llt(A.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success)
        throw NumericError("ridge factorization failed (reciprocal condition estimate " + std::to_string(llt.rcond()) + ")");
    if (primal) return llt.solve(X.transpose() * y);
    return X.transpose() * llt.solve(y);
}

inline void stack_rows(const Dataset& ds, Matrix& X, Vector& y) {
    X.resize(ds.n1() + ds.n2(), ds.dim());
    X << ds.x_real, ds.x_syn;
    y.resize(ds.n1() + ds.n2());
    y << ds.y_real, ds.y_syn;
}

inline SimRun ridge_fit(const Dataset& ds, double lambda, const Array& sigma, SolverPath path = SolverPath::automatic) {
    Matrix X;
    Vector y;
    stack_rows(ds, X, y);
    SimRun run;
    run.fitted = ridge_solve(X, y, lambda, path);
    run.test_error = test_error(run.fitted, ds.w1_star, sigma);
    return run;
}

// S in R^{d x m} with N(0, 1/d) entries, filled column after column so that
// a narrower model uses a prefix of the columns of a wider one.
inline Matrix draw_projection(Eigen::Index d, Eigen::Index m, const StreamKey& key) {
    auto rng = key.stream(StreamRole::projection);
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Matrix S(d, m);
    for (Eigen::Index c = 0; c < m; ++c)
        for (Eigen::Index r = 0; r < d; ++r) S(r, c) = nd(rng);
    return S;
}

// Ridge on features S^T x; the fitted predictor in input space is S v.
inline SimRun rp_fit(const Dataset& ds, const Matrix& S, double lambda, const Array& sigma,
                     SolverPath path = SolverPath::automatic) {
    if (S.rows() != ds.dim()) throw DomainError("projection must have d rows");
    Matrix X;
    Vector y;
    stack_rows(ds, X, y);
    const Matrix F = X * S;
    SimRun run;
    run.fitted = S * ridge_solve(F, y, lambda, path);
    run.test_error = test_error(run.fitted, ds.w1_star, sigma);
    return run;
}

inline SimRun rp_fit(const Dataset& ds, Eigen::Index m, double lambda, const Array& sigma, const StreamKey& key,
                     SolverPath path = SolverPath::automatic) {
    if (m < 1) throw DomainError("random projection needs m >= 1");
    return rp_fit(ds, draw_projection(ds.dim(), m, key), lambda, sigma, path);
}

// Minimizes (1-alpha)/n1 ||X1 w - Y1||^2 + alpha/n2 ||X2 w - Y2||^2 + lambda ||w||^2
// by rescaling rows: source j gets weight pi_j = w_j n / n_j. lambda is not
// rescaled at alpha in {0, 1}.
inline SimRun weighted_ridge_fit(const Dataset& ds, double alpha, double lambda, const Array& sigma,
                                 SolverPath path = SolverPath::automatic) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
    const double n = static_cast<double>(ds.n1() + ds.n2());
    if ((alpha < 1.0 && ds.n1() == 0) || (alpha > 0.0 && ds.n2() == 0))
        throw DomainError("a nonzero weight needs samples from that source");
    const double r1 = ds.n1() > 0 ? std::sqrt((1.0 - alpha) * n / static_cast<double>(ds.n1())) : 0.0;
    const double r2 = ds.n2() > 0 ? std::sqrt(alpha * n / static_cast<double>(ds.n2())) : 0.0;
    Matrix X(ds.n1() + ds.n2(), ds.dim());
    X << r1 * ds.x_real, r2 * ds.x_syn;
    Vector y(ds.n1() + ds.n2());
    y << r1 * ds.y_real, r2 * ds.y_syn;
    SimRun run;
    run.fitted = ridge_solve(X, y, lambda, path);
    run.test_error = test_error(run.fitted, ds.w1_star, sigma);
    return run;
}

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    int count = 0;
};

inline MeanSE mean_se(const std::vector<double>& xs) {
    MeanSE r;
    r.count = static_cast<int>(xs.size());
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / r.count;
    if (r.count < 2) return r;
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(v / (r.count - 1) / r.count);
    return r;
}

// ---------------------------------------------------------------------------
// Iterative mixing: at each step a fresh sample of n1 real and n2 synthetic
// rows is drawn, the synthetic labels come from the previous fitted model
// (from w2* at the first step), and the mixture is refit.

inline std::vector<double> iterative_mixing_trial(const MixtureModel& model, Eigen::Index n, double p2,
                                                  double lambda, int steps, const StreamKey& key) {
    if (steps < 1) throw DomainError("iterative mixing needs steps >= 1");
    model.validate();
    const Eigen::Index n2 = static_cast<Eigen::Index>(std::llround(p2 * static_cast<double>(n)));
    const Eigen::Index n1 = n - n2;
    const Eigen::Index d = model.dim();
    const Array sq = model.sigma.values().sqrt();
    const Targets t = draw_targets(model, key);
    Vector generator = t.w1 + t.delta;
    std::vector<double> errors;
    for (int s = 1; s <= steps; ++s) {
        Matrix X(n, d);
        auto data = key.stream(StreamRole::data, static_cast<std::uint64_t>(s));
        fill_rows(X, sq, data);
        auto noise = key.stream(StreamRole::noise, static_cast<std::uint64_t>(s));
        const Vector z = draw_standard(n, noise);
        Vector y(n);
        y.head(n1) = X.topRows(n1) * t.w1 + std::sqrt(model.noise1) * z.head(n1);
        y.tail(n2) = X.bottomRows(n2) * generator + std::sqrt(model.noise2) * z.tail(n2);
        generator = ridge_solve(X, y, lambda);
        errors.push_back(test_error(generator, t.w1, model.sigma.values()));
    }
    return errors;
}

struct IterativeSimRecord {
    std::vector<MeanSE> per_step;
};

inline IterativeSimRecord iterative_mixing_sim(const MixtureModel& model, Eigen::Index n, double p2, double lambda,
                                               int steps, int trials, std::uint64_t seed,
                                               std::uint64_t scenario = 0) {
    std::vector<std::vector<double>> runs;
    for (int k = 0; k < trials; ++k)
        runs.push_back(iterative_mixing_trial(model, n, p2, lambda, steps, StreamKey{seed, scenario, static_cast<std::uint64_t>(k)}));
    IterativeSimRecord rec;
    for (int s = 0; s < steps; ++s) {
        std::vector<double> col;
        for (const auto& r : runs) col.push_back(r[s]);
        rec.per_step.push_back(mean_se(col));
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimates of r1..r5. Q = (M + lambda)^-1 for the classical
// model and S (S^T M S + lambda)^-1 S^T for random projections.

inline double mc_functional_trial(const FunctionalRequest& req, const Array& s1, const Array& s2, Eigen::Index n1,
                                  Eigen::Index n2, double lambda, std::optional<Eigen::Index> m, const StreamKey& key) {
    const Eigen::Index d = s1.size();
    const double n = static_cast<double>(n1 + n2);
    Matrix X1(n1, d), X2(n2, d);
    auto data = key.stream(StreamRole::data);
    fill_rows(X1, s1.sqrt(), data);
    fill_rows(X2, s2.sqrt(), data);
    const Matrix M1 = X1.transpose() * X1 / n;
    const Matrix M2 = X2.transpose() * X2 / n;
    const Matrix M = M1 + M2;

    Matrix Q;
    if (m) {
        const Matrix S = draw_projection(d, *m, key);
        Matrix R = S.transpose() * M * S;
        R.diagonal().array() += lambda;
        Q = S * R.llt().solve(S.transpose());
    } else {
        Matrix R = M;
        R.diagonal().array() += lambda;
        Q = R.llt().solve(Matrix::Identity(d, d));
    }
    const Vector A = req.a_matrix.matrix();
    const Vector B = req.b_matrix ? Vector(req.b_matrix->matrix()) : Vector::Zero(d);
    const Matrix& Mj = req.source_index == 1 ? M1 : M2;

    // tr A L^T B R = sum_{k,i} L_ki B_k R_ki A_i for diagonal A, B.
    auto bilinear = [&](const Matrix& L, const Matrix& R) { return B.dot(L.cwiseProduct(R) * A); };
    switch (req.kind) {
        case FunctionalKind::r1: {
            const Matrix P = Q * Mj;
            return A.dot(P.diagonal());
        }
        case FunctionalKind::r2:
            return bilinear(Q, Q);
        case FunctionalKind::r3: {
            const Matrix P = Q * Mj;
            return bilinear(P, P);
        }
        case FunctionalKind::r4: {
            const Matrix P = Q * Mj;
            return bilinear(P, Q);
        }
        case FunctionalKind::r5: {
            const Matrix P1 = Q * M1, P2 = Q * M2;
            return bilinear(P1, P2);
        }
    }
    return 0.0;
}

inline MeanSE mc_functional(const FunctionalRequest& req, const Array& s1, const Array& s2, Eigen::Index n1,
                            Eigen::Index n2, double lambda, int trials, std::uint64_t seed,
                            std::optional<Eigen::Index> m = std::nullopt, std::uint64_t scenario = 0) {
    if (trials < 2) throw DomainError("mc_functional needs at least two trials");
    req.validate(s1.size());
    std::vector<double> vals;
    for (int k = 0; k < trials; ++k)
        vals.push_back(mc_functional_trial(req, s1, s2, n1, n2, lambda, m, StreamKey{seed, scenario, static_cast<std::uint64_t>(k)}));
    return mean_se(vals);
}

// ---------------------------------------------------------------------------
// Streaming classical sweep. One trial draws rows sequentially; a grid point
// (n, n1) uses the first n1 rows as real and rows n1..n as synthetic, and the
// shift is delta = c * delta0. Gram and moment prefixes are accumulated in
// fixed blocks of kBlockRows rows, so a point evaluated alone and inside a
// larger sweep produce bit-identical numbers.

struct SweepPoint {
    Eigen::Index n = 0;
    Eigen::Index n1 = 0;
    std::vector<double> shift_scales;  // c values; delta = c * delta0
};

struct SweepResult {
    std::vector<std::vector<double>> errors;  // [point][shift]
};

class ClassicalSweepEngine {
public:
    static constexpr Eigen::Index kBlockRows = 256;

    // delta0 is the shift prior at unit scale; noise1/noise2 are variances.
    ClassicalSweepEngine(Array sigma, Array gamma_prior, Array delta0, double noise1, double noise2, double lambda)
        : sigma_(std::move(sigma)), gamma_(std::move(gamma_prior)), delta0_(std::move(delta0)),
          s1_(std::sqrt(noise1)), s2_(std::sqrt(noise2)), lambda_(lambda) {
        if (!(lambda_ > 0.0)) throw DomainError("ridge needs lambda > 0");
    }

    SweepResult run(const std::vector<SweepPoint>& points, const StreamKey& key) const {
        const Eigen::Index d = sigma_.size();
        Eigen::Index n_max = 0;
        std::set<Eigen::Index> vec_marks, gram_marks;
        for (const auto& p : points) {
            if (p.n < d) throw DomainError("streaming sweep needs n >= d");
            if (p.n1 < 0 || p.n1 > p.n) throw DomainError("sweep point needs 0 <= n1 <= n");
            n_max = std::max(n_max, p.n);
            vec_marks.insert(p.n1);
            vec_marks.insert(p.n);
            gram_marks.insert(p.n);
        }

        auto prior = key.stream(StreamRole::prior);
        const Vector w1 = draw_gaussian(gamma_, prior);
        const Vector delta0 = draw_gaussian(delta0_, prior);
        auto data = key.stream(StreamRole::data);
        auto noise = key.stream(StreamRole::noise);
        const Array sq = sigma_.sqrt();

        Matrix G = Matrix::Zero(d, d);
        Vector pz = Vector::Zero(d), pd = Vector::Zero(d);
        std::map<Eigen::Index, std::pair<Vector, Vector>> snaps;  // rows -> (pz, pd)

        SweepResult out;
        out.errors.resize(points.size());
        Matrix Xb(kBlockRows, d);
        Vector zb(kBlockRows);

        auto handle_mark = [&](Eigen::Index r, Eigen::Index rows_in_block) {
            Vector pz_r = pz, pd_r = pd;
            if (rows_in_block > 0) {
                const auto Xp = Xb.topRows(rows_in_block);
                pz_r += Xp.transpose() * zb.head(rows_in_block);
                pd_r += Xp.transpose() * (Xp * delta0);
            }
            if (vec_marks.count(r)) snaps[r] = {pz_r, pd_r};
            if (!gram_marks.count(r)) return;
            Matrix A = G;
            if (rows_in_block > 0) A.selfadjointView<Eigen::Lower>().rankUpdate(Xb.topRows(rows_in_block).transpose());
            const Vector gw = A.selfadjointView<Eigen::Lower>() * w1;
            A.diagonal().array() += static_cast<double>(r) * lambda_;
            Eigen::LLT<Matrix> llt(A.selfadjointView<Eigen::Lower>());
            if (llt.info() != Eigen::Success) throw NumericError("ridge factorization failed in sweep");
            for (std::size_t i = 0; i < points.size(); ++i) {
                const auto& p = points[i];
                if (p.n != r) continue;
                const auto& lo = snaps.at(p.n1);
                const Vector syn_shift = pd_r - lo.second;
                const Vector base = gw + s1_ * lo.first + s2_ * (pz_r - lo.first);
                for (double c : p.shift_scales) {
                    const Vector w = llt.solve(base + c * syn_shift);
                    out.errors[i].push_back(test_error(w, w1, sigma_));
                }
            }
        };

        if (vec_marks.count(0)) snaps[0] = {pz, pd};
        Eigen::Index done = 0;
        while (done < n_max) {
            fill_rows(Xb, sq, data);
            for (Eigen::Index i = 0; i < kBlockRows; ++i) zb[i] = std::normal_distribution<double>()(noise);
            // Marks strictly inside this block, then the block end.
            for (auto it = vec_marks.upper_bound(done); it != vec_marks.end() && *it < done + kBlockRows; ++it)
                handle_mark(*it, *it - done);
            G.selfadjointView<Eigen::Lower>().rankUpdate(Xb.transpose());
            pz += Xb.transpose() * zb;
            pd += Xb.transpose() * (Xb * delta0);
            done += kBlockRows;
            if (vec_marks.count(done)) handle_mark(done, 0);
        }
        return out;
    }

private:
    Array sigma_, gamma_, delta0_;
    double s1_, s2_, lambda_;
};

}  // namespace collapse

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "ccgraph/common.hpp"
#include "ccgraph/graph.hpp"
#include "ccgraph/kernels.hpp"
#include "ccgraph/model.hpp"
#include "ccgraph/simulate.hpp"

namespace ccgraph {

// Monte-Carlo agreement gates use 4 standard errors throughout.
inline constexpr double kSeGate = 4.0;

struct InversionResult {
    Matrix Xq_hat;  // kq x N reconstruction
    Matrix X_hat;   // n x N full state via the block recovery relation
    double rel_rmse = 0.0;
    double burn_in = 0.0;
};

inline double default_burn_in(const ControllerRealization& real) {
    return 8.0 / std::abs(max_real_eigenvalue(real.Lambda));
}

/// Full state from the truncated state and the derivative series:
/// X^{(q+j)} = Eubar^T [ Lambda^j Xq + sum_{m<j} Lambda^{j-1-m} Theta DY[m] ].
inline Matrix assemble_full_state(const ControllerRealization& real, const Matrix& Xq,
                                  const std::vector<Matrix>& DY) {
    const int k = real.k;
    const int pq = real.p - real.q;
    if (static_cast<int>(DY.size()) != pq) {
        throw std::invalid_argument("assemble_full_state: need p-q derivative series");
    }
    const Eigen::Index cols = Xq.cols();
    Matrix X = Matrix::Zero(real.n(), cols);
    X.topRows(real.nq()) = Xq;

    const Matrix eubar_t = real.Eubar().transpose();
    Matrix lambda_pow = Matrix::Identity(real.nq(), real.nq());
    for (int j = 1; j <= pq; ++j) {
        lambda_pow = lambda_pow * real.Lambda;  // Lambda^j
        Matrix block = lambda_pow * Xq;
        Matrix theta_pow = real.Theta;          // Lambda^{j-1-m} Theta at m = j-1
        for (int m = j - 1; m >= 0; --m) {
            block += theta_pow * DY[static_cast<std::size_t>(m)];
            if (m > 0) theta_pow = real.Lambda * theta_pow;
        }
        X.middleRows((real.q + j - 1) * k, k) = eubar_t * block;
    }
    return X;
}

/// Recovers the truncated state from the output path by the integral
/// representation, discretized with the trapezoidal rule and exact
/// exp(Lambda dt) propagation:
///   Xq_{i+1} = E Xq_i + (dt/2) (E Theta Y_i + Theta Y_{i+1}),  E = e^{Lambda dt}.
/// The missing history before t = 0 decays like e^{Lambda t}; RMSE is
/// evaluated on the window after burn_in only.
inline InversionResult invert_single_path(const ControllerRealization& real, const Path& path,
                                          double dt, const Vector& t, double burn_in) {
    if (t(t.size() - 1) <= burn_in) {
        std::ostringstream os;
        os << "invert_state_path: horizon " << t(t.size() - 1) << " does not exceed burn-in "
           << burn_in;
        throw InsufficientHorizon(os.str());
    }
    const Eigen::Index cols = path.Y.cols();
    const Matrix E = mat_exp(real.Lambda, dt);
    const Matrix E_theta_half = 0.5 * dt * (E * real.Theta);
    const Matrix theta_half = 0.5 * dt * real.Theta;

    InversionResult res;
    res.burn_in = burn_in;
    res.Xq_hat = Matrix::Zero(real.nq(), cols);
    Vector xq = Vector::Zero(real.nq());
    for (Eigen::Index i = 0; i + 1 < cols; ++i) {
        xq = E * xq + E_theta_half * path.Y.col(i) + theta_half * path.Y.col(i + 1);
        res.Xq_hat.col(i + 1) = xq;
    }
    res.X_hat = assemble_full_state(real, res.Xq_hat, path.DY);

    Eigen::Index first = 0;
    while (first < cols && t(first) < burn_in) ++first;
    const auto window = cols - first;
    const double err = (res.Xq_hat.rightCols(window) - path.Xq.rightCols(window)).norm();
    const double ref = path.Xq.rightCols(window).norm();
    res.rel_rmse = ref > 0.0 ? err / ref : err;
    return res;
}

inline std::vector<InversionResult> invert_state_path(const ControllerRealization& real,
                                                      const PathSet& ps, double burn_in) {
    std::vector<InversionResult> out(ps.paths.size());
    parallel_for(ps.paths.size(), [&](std::size_t i) {
        out[i] = invert_single_path(real, ps.paths[i], ps.dt, ps.t, burn_in);
    });
    return out;
}

inline double mean_inversion_rmse(const std::vector<InversionResult>& results) {
    double acc = 0.0;
    for (const auto& r : results) acc += r.rel_rmse;
    return results.empty() ? 0.0 : acc / static_cast<double>(results.size());
}

struct ResidualPairRow {
    int a = 0;
    int b = 0;
    double empirical = 0.0;
    double analytic = 0.0;
    double se = 0.0;
    long n_samples = 0;
    bool agree = false;
};

struct WhitenessRow {
    int a = 0;       // residual component
    int v = 0;       // output component
    int lag = 0;     // lag index (lag * stride steps back)
    double corr = 0.0;
    double gate = 0.0;  // 4 / sqrt(N)
    bool ok = false;
};

struct ResidualNoiseReport {
    double h = 0.0;       // grid-rounded
    double htilde = 0.0;  // grid-rounded
    std::vector<ResidualPairRow> rows;
    std::vector<WhitenessRow> whiteness;
    bool all_agree = false;
    bool whiteness_ok = false;
};

namespace detail {

inline long round_to_grid(double h, double dt) { return std::lround(h / dt); }

// Residual series eps(t_i, h) = Z(:, i + hi) - C exp(A h) X(:, i) for the
// observation row C and target series Z over the sample index set.
inline Matrix residual_series(const Matrix& target, const Matrix& X, const Matrix& row_exp,
                              const std::vector<Eigen::Index>& samples, long hi) {
    Matrix res(target.rows(), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Eigen::Index i = samples[s];
        res.col(static_cast<Eigen::Index>(s)) = target.col(i + hi) - row_exp * X.col(i);
    }
    return res;
}

// Sample mean / SE of the product u_i v_i (covariance estimate with known
// zero means would be biased for short windows; subtract means anyway).
inline void product_moments(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v, double& mean,
                            double& se) {
    const Eigen::Index n = u.size();
    Eigen::RowVectorXd prod = (u.array() - u.mean()).cwiseProduct(v.array() - v.mean());
    mean = prod.mean();
    const double var = (prod.array() - mean).square().sum() / static_cast<double>(n - 1);
    se = std::sqrt(var / static_cast<double>(n));
}

}  // namespace detail

/// Compares the empirical covariance of the prediction residuals
/// eps(t, h) = Y(t+h) - Cbar e^{Ah} X(t) against the analytic value
/// Cbar e^{A(h-m)} G(m) e^{A^T(htilde-m)} Cbar^T, m = min(h, htilde), and
/// checks that residuals are uncorrelated with the observable past.
/// Sample times are strided by max(h, htilde) so noise increments of
/// different samples never overlap.
inline ResidualNoiseReport residual_noise_check(const ControllerRealization& real, const Matrix& Sigma,
                                                const PathSet& ps, double h, double htilde) {
    const double dt = ps.dt;
    const long hi = detail::round_to_grid(h, dt);
    const long hj = detail::round_to_grid(htilde, dt);
    ResidualNoiseReport rep;
    rep.h = static_cast<double>(hi) * dt;
    rep.htilde = static_cast<double>(hj) * dt;

    const long hmax = std::max({hi, hj, 1l});
    const Eigen::Index cols = ps.paths.front().Y.cols();
    std::vector<Eigen::Index> samples;
    for (Eigen::Index i = 10 * hmax; i + hmax < cols; i += hmax) samples.push_back(i);
    if (samples.size() < 8) throw InsufficientHorizon("residual_noise_check: path too short");

    const Matrix exp_h = real.Cbar * mat_exp(real.A, rep.h);
    const Matrix exp_hj = real.Cbar * mat_exp(real.A, rep.htilde);

    // Analytic residual cross-covariance.
    const double m = std::min(rep.h, rep.htilde);
    const Matrix gram = noise_gramian(real.A, real.B, Sigma, m).value;
    const Matrix analytic = real.Cbar * mat_exp(real.A, rep.h - m) * gram *
                            mat_exp(real.A.transpose(), rep.htilde - m) * real.Cbar.transpose();

    // Pool residual samples over paths.
    const int k = real.k;
    const Eigen::Index per_path = static_cast<Eigen::Index>(samples.size());
    const Eigen::Index total = per_path * static_cast<Eigen::Index>(ps.paths.size());
    Matrix res_h(k, total), res_hj(k, total), past(k, total);
    for (std::size_t pi = 0; pi < ps.paths.size(); ++pi) {
        const Path& path = ps.paths[pi];
        res_h.middleCols(static_cast<Eigen::Index>(pi) * per_path, per_path) =
            detail::residual_series(path.Y, path.X, exp_h, samples, hi);
        res_hj.middleCols(static_cast<Eigen::Index>(pi) * per_path, per_path) =
            detail::residual_series(path.Y, path.X, exp_hj, samples, hj);
        for (Eigen::Index s = 0; s < per_path; ++s) {
            past.col(static_cast<Eigen::Index>(pi) * per_path + s) = path.Y.col(samples[static_cast<std::size_t>(s)]);
        }
    }

    rep.all_agree = true;
    for (int a = 1; a <= k; ++a) {
        for (int b = a; b <= k; ++b) {
            ResidualPairRow row;
            row.a = a;
            row.b = b;
            row.n_samples = total;
            detail::product_moments(res_h.row(a - 1), res_hj.row(b - 1), row.empirical, row.se);
            row.analytic = analytic(a - 1, b - 1);
            row.agree = std::abs(row.empirical - row.analytic) <= kSeGate * row.se;
            rep.all_agree = rep.all_agree && row.agree;
            rep.rows.push_back(row);
        }
    }

    // Whiteness: residuals must be uncorrelated with Y_v(s), s <= t. Lag 0
    // is the sample time itself; deeper lags step back by hmax.
    rep.whiteness_ok = true;
    const double gate = kSeGate / std::sqrt(static_cast<double>(total));
    const int max_lags = 10;
    for (int a = 1; a <= k; ++a) {
        const Eigen::RowVectorXd ra = res_h.row(a - 1);
        const double sd_a = std::sqrt((ra.array() - ra.mean()).square().mean());
        for (int v = 1; v <= k; ++v) {
            for (int lag = 0; lag < max_lags; ++lag) {
                Eigen::RowVectorXd lagged(total);
                bool valid = true;
                for (std::size_t pi = 0; pi < ps.paths.size() && valid; ++pi) {
                    for (Eigen::Index s = 0; s < per_path; ++s) {
                        const Eigen::Index i = samples[static_cast<std::size_t>(s)] -
                                               static_cast<Eigen::Index>(lag) * hmax;
                        if (i < 0) {
                            valid = false;
                            break;
                        }
                        lagged(static_cast<Eigen::Index>(pi) * per_path + s) =
                            ps.paths[pi].Y(v - 1, i);
                    }
                }
                if (!valid) break;
                const double sd_l = std::sqrt((lagged.array() - lagged.mean()).square().mean());
                WhitenessRow w;
                w.a = a;
                w.v = v;
                w.lag = lag;
                w.gate = gate;
                const double cov =
                    ((ra.array() - ra.mean()) * (lagged.array() - lagged.mean())).mean();
                w.corr = sd_a > 0.0 && sd_l > 0.0 ? cov / (sd_a * sd_l) : 0.0;
                w.ok = std::abs(w.corr) <= gate;
                rep.whiteness_ok = rep.whiteness_ok && w.ok;
                rep.whiteness.push_back(w);
            }
        }
    }
    return rep;
}

struct LocalNoiseRow {
    double h = 0.0;
    int a = 0;
    int b = 0;
    double empirical = 0.0;   // (1/h) Cov(eps_a, eps_b)
    double analytic_h = 0.0;  // (1/h) (Cubar G(h) Cubar^T)_{ab}
    double limit = 0.0;       // (C_q Sigma C_q^T)_{ab}
    double se = 0.0;
    bool agree_limit = false;
};

struct LocalNoiseReport {
    std::vector<LocalNoiseRow> rows;
    bool smallest_h_agrees = false;
};

/// Scaled covariance of the highest-derivative residuals for shrinking h:
/// (1/h) Cov(eps_a(t,h), eps_b(t,h)) -> (C_q Sigma C_q^T)_{ab}. Rows carry
/// both the finite-h analytic value and the limit; the gate compares the
/// empirical value at the smallest h against the limit.
inline LocalNoiseReport local_noise_limit_check(const ControllerRealization& real, const Matrix& Sigma,
                                                const PathSet& ps, const std::vector<double>& h_list) {
    if (h_list.empty()) throw std::invalid_argument("local_noise_limit_check: empty h list");
    const double dt = ps.dt;
    const int k = real.k;

    LocalNoiseReport rep;
    double smallest = std::numeric_limits<double>::infinity();
    for (double h : h_list) smallest = std::min(smallest, h);

    bool smallest_ok = true;
    for (double h_raw : h_list) {
        const long hi = std::max(1l, detail::round_to_grid(h_raw, dt));
        const double h = static_cast<double>(hi) * dt;
        const Matrix row_exp = real.Cubar * mat_exp(real.A, h);
        const Matrix gram = noise_gramian(real.A, real.B, Sigma, h).value;
        const Matrix analytic_h = (real.Cubar * gram * real.Cubar.transpose()) / h;
        const Matrix cq = real.Cbar.block(0, real.q * k, k, k);
        const Matrix limit = cq * Sigma * cq.transpose();

        const Eigen::Index cols = ps.paths.front().Y.cols();
        std::vector<Eigen::Index> samples;
        for (Eigen::Index i = 10 * hi; i + hi < cols; i += hi) samples.push_back(i);
        if (samples.size() < 8) throw InsufficientHorizon("local_noise_limit_check: path too short");
        // Cap the pooled sample count: the empirical value estimates the
        // finite-h covariance, which sits O(h) away from the limit, so an
        // ever-shrinking standard error would eventually expose that bias
        // rather than a defect.
        const std::size_t cap = 30000 / std::max<std::size_t>(ps.paths.size(), 1);
        if (samples.size() > cap && cap > 0) {
            const std::size_t thin = (samples.size() + cap - 1) / cap;
            std::vector<Eigen::Index> kept;
            for (std::size_t s = 0; s < samples.size(); s += thin) kept.push_back(samples[s]);
            samples.swap(kept);
        }
        const Eigen::Index per_path = static_cast<Eigen::Index>(samples.size());
        const Eigen::Index total = per_path * static_cast<Eigen::Index>(ps.paths.size());

        Matrix res(k, total);
        for (std::size_t pi = 0; pi < ps.paths.size(); ++pi) {
            const Path& path = ps.paths[pi];
            res.middleCols(static_cast<Eigen::Index>(pi) * per_path, per_path) =
                detail::residual_series(path.DY.back(), path.X, row_exp, samples, hi);
        }

        for (int a = 1; a <= k; ++a) {
            for (int b = a; b <= k; ++b) {
                LocalNoiseRow row;
                row.h = h;
                row.a = a;
                row.b = b;
                detail::product_moments(res.row(a - 1), res.row(b - 1), row.empirical, row.se);
                row.empirical /= h;
                row.se /= h;
                row.analytic_h = analytic_h(a - 1, b - 1);
                row.limit = limit(a - 1, b - 1);
                row.agree_limit = std::abs(row.empirical - row.limit) <= kSeGate * row.se;
                if (std::abs(h_raw - smallest) < 0.5 * dt) smallest_ok = smallest_ok && row.agree_limit;
                rep.rows.push_back(row);
            }
        }
    }
    rep.smallest_h_agrees = smallest_ok;
    return rep;
}

struct GrangerRow {
    int a = 0;
    int b = 0;
    double h = 0.0;
    int lags = 0;
    int lag_stride = 1;
    double mse_full = 0.0;
    double mse_reduced = 0.0;
    double reduction = 0.0;  // relative MSE reduction from adding component a
    bool empirical_causal = false;
    bool analytic_present = false;
    bool agree = false;
    bool ridge_used = false;
    double ridge_lambda = 0.0;
};

namespace detail {

struct LsqFit {
    double mse = 0.0;
    bool ridge_used = false;
    double ridge_lambda = 0.0;
};

inline LsqFit ls_mse(const Matrix& design, const Vector& target) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(1e-10);
    LsqFit fit;
    Vector coef;
    if (qr.rank() < design.cols()) {
        // Rank-deficient design: ridge with a recorded regularizer.
        fit.ridge_used = true;
        Matrix gram = design.transpose() * design;
        fit.ridge_lambda = 1e-8 * gram.trace() / static_cast<double>(design.cols());
        gram.diagonal().array() += fit.ridge_lambda;
        coef = gram.ldlt().solve(design.transpose() * target);
    } else {
        coef = qr.solve(target);
    }
    fit.mse = (design * coef - target).squaredNorm() / static_cast<double>(target.size());
    return fit;
}

}  // namespace detail

/// Discrete proxy for the Granger projection: least-squares prediction of
/// Y_b(t+h) from `lags` lagged samples (spaced lag_stride grid steps) of
/// all components versus all but component a. The lag window
/// lags * lag_stride * dt should cover several multiples of the slowest
/// time constant 1/|max Re sigma(A)|. A relative MSE reduction below 1%
/// counts as no empirical causality; the row records agreement with the
/// analytic edge decision (an approximation check, not a hard gate).
inline GrangerRow granger_regression_check(const ControllerRealization& real, const Matrix& Sigma,
                                           const PathSet& ps, int a, int b, int lags, double h,
                                           int lag_stride = 1, const EdgeThresholds& th = {}) {
    detail::check_pair(a, b, real.k);
    if (lags < 1 || lag_stride < 1) {
        throw std::invalid_argument("granger_regression_check: lags and lag_stride must be >= 1");
    }
    const double dt = ps.dt;
    const long hi = std::max(1l, detail::round_to_grid(h, dt));
    const int k = real.k;

    const Eigen::Index cols = ps.paths.front().Y.cols();
    const Eigen::Index start = static_cast<Eigen::Index>(lags) * lag_stride;
    std::vector<std::pair<std::size_t, Eigen::Index>> samples;  // (path, time index)
    for (std::size_t pi = 0; pi < ps.paths.size(); ++pi) {
        for (Eigen::Index i = start; i + hi < cols; ++i) samples.emplace_back(pi, i);
    }
    // Cap the design height; thinning keeps the estimate cheap and is
    // deterministic.
    const std::size_t cap = 20000;
    if (samples.size() > cap) {
        const std::size_t thin = (samples.size() + cap - 1) / cap;
        std::vector<std::pair<std::size_t, Eigen::Index>> kept;
        for (std::size_t s = 0; s < samples.size(); s += thin) kept.push_back(samples[s]);
        samples.swap(kept);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    if (n < static_cast<Eigen::Index>(lags) * k + 10) {
        throw InsufficientHorizon("granger_regression_check: too few samples");
    }

    Matrix full(n, static_cast<Eigen::Index>(lags) * k);
    Matrix reduced(n, static_cast<Eigen::Index>(lags) * (k - 1));
    Vector target(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const Path& path = ps.paths[samples[static_cast<std::size_t>(s)].first];
        const Eigen::Index i = samples[static_cast<std::size_t>(s)].second;
        target(s) = path.Y(b - 1, i + hi);
        Eigen::Index cf = 0, cr = 0;
        for (int lag = 0; lag < lags; ++lag) {
            for (int v = 1; v <= k; ++v) {
                const double y = path.Y(v - 1, i - static_cast<Eigen::Index>(lag) * lag_stride);
                full(s, cf++) = y;
                if (v != a) reduced(s, cr++) = y;
            }
        }
    }

    const detail::LsqFit fit_full = detail::ls_mse(full, target);
    const detail::LsqFit fit_red = detail::ls_mse(reduced, target);

    GrangerRow row;
    row.a = a;
    row.b = b;
    row.h = static_cast<double>(hi) * dt;
    row.lags = lags;
    row.lag_stride = lag_stride;
    row.mse_full = fit_full.mse;
    row.mse_reduced = fit_red.mse;
    row.reduction = fit_red.mse > 0.0 ? (fit_red.mse - fit_full.mse) / fit_red.mse : 0.0;
    row.empirical_causal = row.reduction >= 0.01;
    row.analytic_present = !directed_edge_absent_cg(real, a, b, th).absent;
    row.agree = row.empirical_causal == row.analytic_present;
    row.ridge_used = fit_full.ridge_used || fit_red.ridge_used;
    row.ridge_lambda = std::max(fit_full.ridge_lambda, fit_red.ridge_lambda);
    return row;
}

struct VerificationSummary {
    double inversion_rmse = 0.0;
    bool inversion_ok = false;
    ResidualNoiseReport residual;
    LocalNoiseReport local_noise;
    std::vector<GrangerRow> granger;
    bool granger_all_agree = false;
    bool accepted = false;  // hard gates only; granger agreement is advisory
};

struct VerificationOptions {
    double dt = 5e-3;
    long steps = 24000;  // horizon 120 at the default dt
    int n_paths = 12;
    std::uint64_t seed = 42;
    double residual_h = 0.5;
    std::vector<double> local_h_list = {0.02, 0.01, 0.005};
    int granger_lags = 60;
    int granger_lag_stride = 20;  // window 6 time units at the default dt
    double granger_h = 0.1;
    double inversion_gate = 0.05;
};

/// The full empirical battery: simulate, invert, residual covariance,
/// local noise limit, and the Granger regressions for every ordered pair.
inline VerificationSummary run_verification(const ControllerRealization& real, const Matrix& Sigma,
                                            const VerificationOptions& opt = {},
                                            const EdgeThresholds& th = {}) {
    SimulationConfig cfg;
    cfg.dt = opt.dt;
    cfg.steps = opt.steps;
    cfg.n_paths = opt.n_paths;
    cfg.seed = opt.seed;
    cfg.init = SimulationConfig::Init::stationary;
    const PathSet ps = simulate_paths(real, Sigma, cfg);

    VerificationSummary sum;
    const double burn = default_burn_in(real);
    sum.inversion_rmse = mean_inversion_rmse(invert_state_path(real, ps, burn));
    sum.inversion_ok = sum.inversion_rmse < opt.inversion_gate;

    sum.residual = residual_noise_check(real, Sigma, ps, opt.residual_h, opt.residual_h);
    sum.local_noise = local_noise_limit_check(real, Sigma, ps, opt.local_h_list);

    sum.granger_all_agree = true;
    for (int a = 1; a <= real.k; ++a) {
        for (int b = 1; b <= real.k; ++b) {
            if (a == b) continue;
            sum.granger.push_back(granger_regression_check(real, Sigma, ps, a, b, opt.granger_lags,
                                                           opt.granger_h, opt.granger_lag_stride, th));
            sum.granger_all_agree = sum.granger_all_agree && sum.granger.back().agree;
        }
    }

    sum.accepted = sum.inversion_ok && sum.residual.all_agree && sum.residual.whiteness_ok &&
                   sum.local_noise.smallest_h_agrees;
    return sum;
}

}  // namespace ccgraph

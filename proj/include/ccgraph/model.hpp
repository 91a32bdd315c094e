#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccgraph/common.hpp"
#include "ccgraph/matrix_polynomial.hpp"

namespace ccgraph {

// Validation tolerances. Eigenvalues with real part above -kStabilityMargin
// count as unstable; the positive definiteness cut for the noise covariance
// is relative to its mean diagonal.
inline constexpr double kStabilityMargin = 1e-8;
inline constexpr double kPdRelTol = 1e-10;
inline constexpr double kRankRelTol = 1e-8;
inline constexpr double kFractionGridTol = 1e-8;

/// User-facing model: a monic right polynomial fraction H = Q P^{-1} with
/// deg P = p > deg Q bound = q > 0, the driving-noise covariance, and an
/// optional AR/MA pair (Pstar, Qstar) describing the same transfer function
/// as a left fraction Pstar^{-1} Qstar.
struct ModelSpec {
    int k = 0;
    int p = 0;
    int q = 0;
    MatrixPolynomial P;
    MatrixPolynomial Q;
    Matrix sigma_L;
    std::optional<std::pair<MatrixPolynomial, MatrixPolynomial>> mcarma;

    ModelSpec(int k_, int p_, int q_, MatrixPolynomial P_, MatrixPolynomial Q_, Matrix sigma,
              std::optional<std::pair<MatrixPolynomial, MatrixPolynomial>> mcarma_ = std::nullopt)
        : k(k_), p(p_), q(q_), P(std::move(P_)), Q(std::move(Q_)), sigma_L(std::move(sigma)),
          mcarma(std::move(mcarma_)) {
        if (k <= 0 || !(p > q && q > 0)) {
            throw std::invalid_argument("ModelSpec: requires k >= 1 and p > q > 0");
        }
        if (P.k() != k || Q.k() != k) throw std::invalid_argument("ModelSpec: polynomial size mismatch");
        if (P.degree() != p) throw std::invalid_argument("ModelSpec: deg(P) must equal p");
        if (!P.is_monic()) throw std::invalid_argument("ModelSpec: P must be monic");
        if (Q.degree() > q) throw std::invalid_argument("ModelSpec: deg(Q) must be <= q");
        if (sigma_L.rows() != k || sigma_L.cols() != k) {
            throw std::invalid_argument("ModelSpec: sigma_L must be k x k");
        }
        if ((sigma_L - sigma_L.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
            throw std::invalid_argument("ModelSpec: sigma_L must be symmetric (tol 1e-12)");
        }
    }

    /// Coefficient of z^q in Q. Stored degree may be lower if the user gave a
    /// shorter polynomial; the missing coefficient is zero (and will fail the
    /// rank check during validation).
    Matrix Cq() const {
        return Q.degree() == q ? Q.coeff(q) : Matrix::Zero(k, k);
    }
};

/// The unique controller canonical realization: block companion A (kp x kp),
/// B = last-block identity, the two observation rows Cbar = (C_0 .. C_q 0 ..)
/// and Cubar = (0 .. 0 C_0 .. C_q), and the truncated-state pair (Lambda,
/// Theta) with Lambda the companion of -Cq^{-1} C_j and Theta = last-block
/// Cq^{-1}.
struct ControllerRealization {
    int k = 0;
    int p = 0;
    int q = 0;
    Matrix A;       // kp x kp
    Matrix B;       // kp x k
    Matrix Cbar;    // k x kp
    Matrix Cubar;   // k x kp
    Matrix Lambda;  // kq x kq
    Matrix Theta;   // kq x k

    int n() const { return k * p; }
    int nq() const { return k * q; }

    /// Block selector E_j, j = 1..p: identity in the j-th k-block.
    Matrix Ej(int j) const {
        if (j < 1 || j > p) throw IndexOutOfRange("Ej: j outside [1, p]");
        Matrix e = Matrix::Zero(n(), k);
        e.block((j - 1) * k, 0, k, k) = Matrix::Identity(k, k);
        return e;
    }

    /// Ebar (kp x kq): embeds the truncated state into the first kq coordinates.
    Matrix Ebar() const {
        Matrix e = Matrix::Zero(n(), nq());
        e.topRows(nq()) = Matrix::Identity(nq(), nq());
        return e;
    }

    /// Eubar (kq x k): selects the last k-block of a kq vector.
    Matrix Eubar() const {
        Matrix e = Matrix::Zero(nq(), k);
        e.bottomRows(k) = Matrix::Identity(k, k);
        return e;
    }
};

inline ControllerRealization build_controller_form(const ModelSpec& spec) {
    const int k = spec.k, p = spec.p, q = spec.q;
    const Matrix cq = spec.Cq();

    Eigen::FullPivLU<Matrix> lu(cq);
    lu.setThreshold(kRankRelTol);
    if (lu.rank() < k) {
        std::ostringstream os;
        os << "build_controller_form: rank(C_q) = " << lu.rank() << " < k = " << k;
        throw SingularCq(os.str());
    }
    const Matrix cq_inv = lu.inverse();

    ControllerRealization r;
    r.k = k;
    r.p = p;
    r.q = q;

    r.A = Matrix::Zero(k * p, k * p);
    for (int j = 0; j + 1 < p; ++j) {
        r.A.block(j * k, (j + 1) * k, k, k) = Matrix::Identity(k, k);
    }
    // Bottom block row (-A_p ... -A_1); A_i is the coefficient of z^{p-i}.
    for (int j = 0; j < p; ++j) {
        r.A.block((p - 1) * k, j * k, k, k) = -spec.P.coeff(j);
    }

    r.B = Matrix::Zero(k * p, k);
    r.B.block((p - 1) * k, 0, k, k) = Matrix::Identity(k, k);

    r.Cbar = Matrix::Zero(k, k * p);
    r.Cubar = Matrix::Zero(k, k * p);
    for (int j = 0; j <= q; ++j) {
        const Matrix cj = j <= spec.Q.degree() ? spec.Q.coeff(j) : Matrix::Zero(k, k);
        r.Cbar.block(0, j * k, k, k) = cj;
        r.Cubar.block(0, (p - q - 1 + j) * k, k, k) = cj;
    }

    r.Lambda = Matrix::Zero(k * q, k * q);
    for (int j = 0; j + 1 < q; ++j) {
        r.Lambda.block(j * k, (j + 1) * k, k, k) = Matrix::Identity(k, k);
    }
    for (int j = 0; j < q; ++j) {
        const Matrix cj = j <= spec.Q.degree() ? spec.Q.coeff(j) : Matrix::Zero(k, k);
        r.Lambda.block((q - 1) * k, j * k, k, k) = -cq_inv * cj;
    }

    r.Theta = Matrix::Zero(k * q, k);
    r.Theta.block((q - 1) * k, 0, k, k) = cq_inv;

    return r;
}

struct McarmaRealization {
    Matrix A;  // kp* x kp*
    Matrix B;  // kp* x k, stacked beta blocks
    Matrix C;  // k x kp*
};

/// State space triple of the AR/MA pair: companion A from Pstar, C picking
/// the first block, and B stacked from the beta recursion
///   beta_{p-j} = -sum_{i=1}^{p-j-1} P_i beta_{p-j-i} + Q_{q-j},  j = q..0,
/// with beta_1 = ... = beta_{p-q-1} = 0. The minus sign on the P-sum is the
/// one that makes C (zI - A)^{-1} B = Pstar(z)^{-1} Qstar(z); the grid test
/// in the suite pins this down.
inline McarmaRealization build_mcarma_realization(const MatrixPolynomial& Pstar,
                                                  const MatrixPolynomial& Qstar) {
    const int k = Pstar.k();
    const int ps = Pstar.degree();
    const int qs = Qstar.degree();
    if (Qstar.k() != k) throw std::invalid_argument("build_mcarma_realization: size mismatch");
    if (qs >= ps) {
        std::ostringstream os;
        os << "build_mcarma_realization: deg(Qstar) = " << qs << " must be < deg(Pstar) = " << ps;
        throw DegreeError(os.str());
    }
    if (!Pstar.is_monic()) throw std::invalid_argument("build_mcarma_realization: Pstar must be monic");

    // P_i multiplies z^{p*-i}, Q_j multiplies z^{q*-j}.
    auto P_at = [&](int i) { return Pstar.coeff(ps - i); };
    auto Q_at = [&](int j) { return j >= 0 && j <= qs ? Qstar.coeff(qs - j) : Matrix::Zero(k, k); };

    std::vector<Matrix> beta(static_cast<std::size_t>(ps) + 1, Matrix::Zero(k, k));  // beta[1..p*]
    for (int j = qs; j >= 0; --j) {
        const int idx = ps - j;
        Matrix acc = Q_at(qs - j);
        for (int i = 1; i <= ps - j - 1; ++i) {
            acc -= P_at(i) * beta[static_cast<std::size_t>(ps - j - i)];
        }
        beta[static_cast<std::size_t>(idx)] = acc;
    }

    McarmaRealization m;
    m.A = Matrix::Zero(k * ps, k * ps);
    for (int j = 0; j + 1 < ps; ++j) m.A.block(j * k, (j + 1) * k, k, k) = Matrix::Identity(k, k);
    for (int j = 0; j < ps; ++j) m.A.block((ps - 1) * k, j * k, k, k) = -P_at(ps - j);
    m.B = Matrix::Zero(k * ps, k);
    for (int j = 1; j <= ps; ++j) m.B.block((j - 1) * k, 0, k, k) = beta[static_cast<std::size_t>(j)];
    m.C = Matrix::Zero(k, k * ps);
    m.C.block(0, 0, k, k) = Matrix::Identity(k, k);
    return m;
}

/// H(z) = C (zI - A)^{-1} B through one linear solve; refuses points whose
/// solve residual indicates z is effectively on the spectrum.
inline ComplexMatrix transfer_eval(const Matrix& A, const Matrix& B, const Matrix& C, Complex z) {
    const auto n = A.rows();
    ComplexMatrix zIA = ComplexMatrix::Identity(n, n) * z - A.cast<Complex>();
    ComplexMatrix W = zIA.partialPivLu().solve(B.cast<Complex>());
    const double resid = (zIA * W - B.cast<Complex>()).norm();
    if (!(resid <= 1e-6 * B.norm())) {
        std::ostringstream os;
        os << "transfer_eval: solve residual " << resid << " at z = (" << z.real() << ", "
           << z.imag() << "); point too close to the spectrum";
        throw NearSpectrum(os.str());
    }
    return C.cast<Complex>() * W;
}

/// Evaluates the right fraction Q(z) P(z)^{-1}.
inline ComplexMatrix right_fraction_eval(const MatrixPolynomial& P, const MatrixPolynomial& Q, Complex z) {
    ComplexMatrix pz = poly_eval(P, z);
    ComplexMatrix qz = poly_eval(Q, z);
    // X = Q P^{-1}  <=>  P^T X^T = Q^T.
    ComplexMatrix xt = pz.transpose().partialPivLu().solve(qz.transpose());
    return xt.transpose();
}

/// Evaluates the left fraction Pstar(z)^{-1} Qstar(z).
inline ComplexMatrix left_fraction_eval(const MatrixPolynomial& Pstar, const MatrixPolynomial& Qstar,
                                        Complex z) {
    return poly_eval(Pstar, z).partialPivLu().solve(poly_eval(Qstar, z));
}

/// Deterministic off-spectrum evaluation grid: points on a ring of radius
/// 2 + max |zero|, which keeps a unit-order distance to every zero of P and
/// Pstar.
inline std::vector<Complex> fraction_grid(const std::vector<Complex>& zeros, int points) {
    double rad = 0.0;
    for (Complex z : zeros) rad = std::max(rad, std::abs(z));
    rad += 2.0;
    std::vector<Complex> grid;
    grid.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double theta = 2.0 * M_PI * (static_cast<double>(i) + 0.5) / points;
        grid.push_back(Complex(rad * std::cos(theta), rad * std::sin(theta)));
    }
    return grid;
}

/// max_z || Pstar(z)^{-1} Qstar(z) - Q(z) P(z)^{-1} ||_F over the grid.
inline double fraction_equiv_max_diff(const MatrixPolynomial& P, const MatrixPolynomial& Q,
                                      const MatrixPolynomial& Pstar, const MatrixPolynomial& Qstar,
                                      const std::vector<Complex>& grid) {
    double worst = 0.0;
    for (Complex z : grid) {
        worst = std::max(worst, (left_fraction_eval(Pstar, Qstar, z) - right_fraction_eval(P, Q, z)).norm());
    }
    return worst;
}

struct MinimalityResult {
    bool minimal = false;
    int ctrb_rank = 0;
    int obsv_rank = 0;
};

inline int numerical_rank(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const double cut = kRankRelTol * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cut) ++rank;
    }
    return rank;
}

/// Minimality of the realization = joint full rank of the controllability
/// and observability matrices, which for this canonical form is equivalent
/// to coprimeness of (P, Q).
inline MinimalityResult check_minimal(const ControllerRealization& real) {
    const int n = real.n();
    const int k = real.k;
    Matrix ctrb(n, n * k);
    Matrix obsv(n * k, n);
    Matrix col = real.B;
    Matrix row = real.Cbar;
    for (int i = 0; i < n; ++i) {
        ctrb.middleCols(i * k, k) = col;
        obsv.middleRows(i * k, k) = row;
        if (i + 1 < n) {
            col = real.A * col;
            row = row * real.A;
        }
    }
    MinimalityResult res;
    res.ctrb_rank = numerical_rank(ctrb);
    res.obsv_rank = numerical_rank(obsv);
    res.minimal = res.ctrb_rank == n && res.obsv_rank == n;
    return res;
}

struct ValidationReport {
    bool accepted = false;
    std::vector<Complex> zeros_P;
    std::vector<Complex> zeros_Q;
    int rank_Cq = 0;
    double sigma_L_min_eig = 0.0;
    bool minimal = false;
    std::vector<std::string> failures;
};

/// Checks the model admissibility conditions in order: full-rank C_q, zeros
/// of P and of Q strictly in the left half plane, positive definite noise
/// covariance, minimality, and (when an AR/MA pair is attached) fraction
/// equivalence on the evaluation grid.
inline ValidationReport validate_iccss(const ModelSpec& spec) {
    ValidationReport rep;
    const int k = spec.k;
    const Matrix cq = spec.Cq();

    Eigen::FullPivLU<Matrix> lu(cq);
    lu.setThreshold(kRankRelTol);
    rep.rank_Cq = static_cast<int>(lu.rank());
    if (rep.rank_Cq < k) rep.failures.push_back("Cq_rank_deficient");

    rep.zeros_P = poly_zeros(spec.P, Matrix::Identity(k, k));
    double max_re_P = -std::numeric_limits<double>::infinity();
    for (Complex z : rep.zeros_P) max_re_P = std::max(max_re_P, z.real());
    if (!(max_re_P < -kStabilityMargin)) rep.failures.push_back("NP_not_stable");

    if (rep.rank_Cq == k) {
        rep.zeros_Q = poly_zeros(spec.Q, lu.inverse());
        double max_re_Q = -std::numeric_limits<double>::infinity();
        for (Complex z : rep.zeros_Q) max_re_Q = std::max(max_re_Q, z.real());
        if (!(max_re_Q < -kStabilityMargin)) rep.failures.push_back("NQ_not_stable");
    }

    Eigen::SelfAdjointEigenSolver<Matrix> es(spec.sigma_L);
    rep.sigma_L_min_eig = es.eigenvalues().minCoeff();
    const double pd_tol = kPdRelTol * spec.sigma_L.trace() / k;
    if (!(rep.sigma_L_min_eig > pd_tol)) rep.failures.push_back("sigma_L_not_pd");

    if (rep.rank_Cq == k) {
        rep.minimal = check_minimal(build_controller_form(spec)).minimal;
        if (!rep.minimal) rep.failures.push_back("not_minimal");
    }

    if (spec.mcarma) {
        std::vector<Complex> all_zeros = rep.zeros_P;
        all_zeros.insert(all_zeros.end(), rep.zeros_Q.begin(), rep.zeros_Q.end());
        const double diff = fraction_equiv_max_diff(spec.P, spec.Q, spec.mcarma->first,
                                                    spec.mcarma->second, fraction_grid(all_zeros, 50));
        if (!(diff < kFractionGridTol)) rep.failures.push_back("mcarma_fraction_mismatch");
    }

    rep.accepted = rep.failures.empty();
    return rep;
}

}  // namespace ccgraph

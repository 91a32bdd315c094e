#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "ccgraph/common.hpp"
#include "ccgraph/model.hpp"

namespace ccgraph {

namespace detail {

inline void pade3(const Matrix& M, const Matrix& M2, Matrix& U, Matrix& V) {
    static const double b[] = {120., 60., 12., 1.};
    const Matrix I = Matrix::Identity(M.rows(), M.cols());
    U.noalias() = M * (b[3] * M2 + b[1] * I);
    V = b[2] * M2 + b[0] * I;
}

inline void pade5(const Matrix& M, const Matrix& M2, const Matrix& M4, Matrix& U, Matrix& V) {
    static const double b[] = {30240., 15120., 3360., 420., 30., 1.};
    const Matrix I = Matrix::Identity(M.rows(), M.cols());
    U.noalias() = M * (b[5] * M4 + b[3] * M2 + b[1] * I);
    V = b[4] * M4 + b[2] * M2 + b[0] * I;
}

inline void pade7(const Matrix& M, const Matrix& M2, const Matrix& M4, const Matrix& M6, Matrix& U,
                  Matrix& V) {
    static const double b[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    const Matrix I = Matrix::Identity(M.rows(), M.cols());
    U.noalias() = M * (b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * I);
    V = b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * I;
}

inline void pade9(const Matrix& M, const Matrix& M2, const Matrix& M4, const Matrix& M6, Matrix& U,
                  Matrix& V) {
    static const double b[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                               2162160.,     110880.,     3960.,       90.,        1.};
    const Matrix I = Matrix::Identity(M.rows(), M.cols());
    const Matrix M8 = M6 * M2;
    U.noalias() = M * (b[9] * M8 + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * I);
    V = b[8] * M8 + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * I;
}

inline void pade13(const Matrix& M, const Matrix& M2, const Matrix& M4, const Matrix& M6, Matrix& U,
                   Matrix& V) {
    static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                               1187353796428800.,  129060195264000.,   10559470521600.,
                               670442572800.,      33522128640.,       1323241920.,
                               40840800.,          960960.,            16380.,
                               182.,               1.};
    const Matrix I = Matrix::Identity(M.rows(), M.cols());
    U.noalias() = M * (M6 * (b[13] * M6 + b[11] * M4 + b[9] * M2) + b[7] * M6 + b[5] * M4 +
                       b[3] * M2 + b[1] * I);
    V.noalias() = M6 * (b[12] * M6 + b[10] * M4 + b[8] * M2);
    V += b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * I;
}

}  // namespace detail

/// exp(M * t) by Pade approximation with scaling and squaring; approximant
/// degree and scaling follow the usual backward-error bounds on the 1-norm.
inline Matrix mat_exp(const Matrix& M, double t = 1.0) {
    if (M.rows() != M.cols()) throw std::invalid_argument("mat_exp: matrix must be square");
    const Matrix B = M * t;
    const double norm = B.cwiseAbs().colwise().sum().maxCoeff();

    Matrix U, V;
    int squarings = 0;
    const Matrix B2 = B * B;
    if (norm < 1.495585217958292e-2) {
        detail::pade3(B, B2, U, V);
    } else if (norm < 2.539398330063230e-1) {
        const Matrix B4 = B2 * B2;
        detail::pade5(B, B2, B4, U, V);
    } else if (norm < 9.504178996162932e-1) {
        const Matrix B4 = B2 * B2;
        const Matrix B6 = B4 * B2;
        detail::pade7(B, B2, B4, B6, U, V);
    } else if (norm < 2.097847961257068e0) {
        const Matrix B4 = B2 * B2;
        const Matrix B6 = B4 * B2;
        detail::pade9(B, B2, B4, B6, U, V);
    } else {
        const double theta13 = 5.371920351148152e0;
        if (norm > theta13) {
            squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / theta13))));
        }
        const double scale = std::ldexp(1.0, -squarings);
        const Matrix Bs = B * scale;
        const Matrix Bs2 = Bs * Bs;
        const Matrix Bs4 = Bs2 * Bs2;
        const Matrix Bs6 = Bs4 * Bs2;
        detail::pade13(Bs, Bs2, Bs4, Bs6, U, V);
    }

    Matrix expm = (V - U).partialPivLu().solve(V + U);
    for (int i = 0; i < squarings; ++i) expm = expm * expm;
    return expm;
}

inline double max_real_eigenvalue(const Matrix& A) {
    Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

/// Stationary covariance Gamma solving A Gamma + Gamma A^T + W = 0, via the
/// vectorized Kronecker system. Adequate for the kp <= a-few-dozen sizes this
/// library targets.
inline Matrix stationary_cov(const Matrix& A, const Matrix& W) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || W.rows() != n || W.cols() != n) {
        throw std::invalid_argument("stationary_cov: shape mismatch");
    }
    if (!(max_real_eigenvalue(A) < 0.0)) {
        throw UnstableA("stationary_cov: A has an eigenvalue with nonnegative real part");
    }

    // (I (x) A + A (x) I) vec(Gamma) = -vec(W), column-major vec.
    Matrix K = Matrix::Zero(n * n, n * n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K.block(j * n, j * n, n, n) += A;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index l = 0; l < n; ++l) K(j * n + i, l * n + i) += A(j, l);
        }
    }
    Vector w = Eigen::Map<const Vector>(W.data(), n * n);
    Vector g = K.partialPivLu().solve(-w);
    Matrix gamma = Eigen::Map<const Matrix>(g.data(), n, n);
    return 0.5 * (gamma + gamma.transpose());
}

struct GramianResult {
    double horizon = 0.0;  // infinity() marks the stationary limit
    Matrix value;
};

/// One Van Loan block exponential gives both the transition matrix
/// exp(A h) and the noise Gramian integral_0^h exp(A u) W exp(A^T u) du.
inline void van_loan_discretize(const Matrix& A, const Matrix& W, double h, Matrix& phi, Matrix& gram) {
    const Eigen::Index n = A.rows();
    Matrix block = Matrix::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = -A;
    block.topRightCorner(n, n) = W;
    block.bottomRightCorner(n, n) = A.transpose();
    const Matrix F = mat_exp(block, h);
    phi = F.bottomRightCorner(n, n).transpose();
    gram = phi * F.topRightCorner(n, n);
    gram = 0.5 * (gram + gram.transpose()).eval();
}

/// integral_0^h exp(A u) B Sigma B^T exp(A^T u) du; h = infinity delegates to
/// the Lyapunov solve.
inline GramianResult noise_gramian(const Matrix& A, const Matrix& B, const Matrix& Sigma, double h) {
    if (h < 0.0) throw NegativeHorizon("noise_gramian: negative horizon");
    const Matrix W = B * Sigma * B.transpose();
    GramianResult res;
    res.horizon = h;
    if (std::isinf(h)) {
        res.value = stationary_cov(A, W);
        return res;
    }
    if (h == 0.0) {
        res.value = Matrix::Zero(A.rows(), A.cols());
        return res;
    }
    Matrix phi;
    van_loan_discretize(A, W, h, phi, res.value);
    return res;
}

enum class KernelSide { top, bottom };

/// The kernel family of the output representation: with
///   K   = Ebar + sum_{j=1}^{p-q} E_{q+j} Eubar^T Lambda^j,
///   K_m = sum_{j=m+1}^{p-q} E_{q+j} Eubar^T Lambda^{j-1-m},
/// the kernels are M(h) = C exp(A h) K and M_m(h) = C exp(A h) K_m with C
/// either Cbar (top) or Cubar (bottom), and the h-derivatives at zero
/// replace exp(A h) by A. K and the K_m are fixed per realization and
/// precomputed; h-dependent values are evaluated on demand.
class KernelSet {
  public:
    explicit KernelSet(const ControllerRealization& real) : real_(real) {
        const int pq = real.p - real.q;
        const Matrix eubar_t = real.Eubar().transpose();
        Matrix lambda_pow = Matrix::Identity(real.nq(), real.nq());  // Lambda^0

        std::vector<Matrix> ejs;  // E_{q+j} Eubar^T for j = 1..p-q
        ejs.reserve(static_cast<std::size_t>(pq));
        for (int j = 1; j <= pq; ++j) ejs.push_back(real.Ej(real.q + j) * eubar_t);

        K_ = real.Ebar();
        for (int j = 1; j <= pq; ++j) {
            lambda_pow = lambda_pow * real.Lambda;  // Lambda^j
            K_ += ejs[static_cast<std::size_t>(j - 1)] * lambda_pow;
        }

        Km_.resize(static_cast<std::size_t>(pq), Matrix::Zero(real.n(), real.nq()));
        for (int m = 0; m < pq; ++m) {
            Matrix pow = Matrix::Identity(real.nq(), real.nq());  // Lambda^{j-1-m}, j = m+1
            Matrix acc = Matrix::Zero(real.n(), real.nq());
            for (int j = m + 1; j <= pq; ++j) {
                acc += ejs[static_cast<std::size_t>(j - 1)] * pow;
                pow = pow * real.Lambda;
            }
            Km_[static_cast<std::size_t>(m)] = acc;
        }
    }

    const ControllerRealization& realization() const { return real_; }

    Matrix M(double h, KernelSide side) const {
        return row(side) * mat_exp(real_.A, h) * K_;
    }

    Matrix Mm(double h, int m, KernelSide side) const {
        check_m(m);
        return row(side) * mat_exp(real_.A, h) * Km_[static_cast<std::size_t>(m)];
    }

    /// All kernels at one h from a single matrix exponential.
    void at(double h, KernelSide side, Matrix& M_out, std::vector<Matrix>& Mm_out) const {
        const Matrix propagated = row(side) * mat_exp(real_.A, h);
        M_out = propagated * K_;
        Mm_out.resize(Km_.size());
        for (std::size_t m = 0; m < Km_.size(); ++m) Mm_out[m] = propagated * Km_[m];
    }

    Matrix M_deriv0(KernelSide side) const { return row(side) * real_.A * K_; }

    Matrix Mm_deriv0(int m, KernelSide side) const {
        check_m(m);
        return row(side) * real_.A * Km_[static_cast<std::size_t>(m)];
    }

    const Matrix& K() const { return K_; }
    const Matrix& Km(int m) const {
        check_m(m);
        return Km_[static_cast<std::size_t>(m)];
    }

  private:
    const Matrix& row(KernelSide side) const {
        return side == KernelSide::top ? real_.Cbar : real_.Cubar;
    }
    void check_m(int m) const {
        if (m < 0 || m >= static_cast<int>(Km_.size())) {
            std::ostringstream os;
            os << "kernel index m = " << m << " outside [0, " << Km_.size() - 1 << "]";
            throw IndexOutOfRange(os.str());
        }
    }

    ControllerRealization real_;
    Matrix K_;
    std::vector<Matrix> Km_;
};

inline Matrix kernel_M(const ControllerRealization& real, double h, KernelSide side) {
    return KernelSet(real).M(h, side);
}

inline Matrix kernel_Mm(const ControllerRealization& real, double h, int m, KernelSide side) {
    return KernelSet(real).Mm(h, m, side);
}

struct KernelDerivatives {
    Matrix M_deriv0;                // Mubar'(0)
    std::vector<Matrix> Mm_deriv0;  // Mubar_m'(0), m = 0..p-q-1
};

inline KernelDerivatives kernel_deriv_at_zero(const ControllerRealization& real) {
    KernelSet ks(real);
    KernelDerivatives d;
    d.M_deriv0 = ks.M_deriv0(KernelSide::bottom);
    for (int m = 0; m < real.p - real.q; ++m) d.Mm_deriv0.push_back(ks.Mm_deriv0(m, KernelSide::bottom));
    return d;
}

/// Spectral density f(lambda) = H(i lambda) Sigma H(i lambda)^* / (2 pi),
/// Hermitian by construction up to roundoff and re-symmetrized on output.
inline ComplexMatrix spectral_density(const ControllerRealization& real, const Matrix& Sigma,
                                      double lambda) {
    const ComplexMatrix H = transfer_eval(real.A, real.B, real.Cbar, Complex(0.0, lambda));
    ComplexMatrix f = H * Sigma.cast<Complex>() * H.adjoint() / (2.0 * M_PI);
    return 0.5 * (f + f.adjoint());
}

}  // namespace ccgraph

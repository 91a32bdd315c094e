#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <sstream>
#include <utility>
#include <vector>

#include "ccgraph/common.hpp"

namespace ccgraph {

/// Square matrix polynomial with ascending-power coefficient storage:
/// coeff(i) multiplies z^i. Trailing all-zero coefficients are trimmed on
/// construction, so degree() is always the index of the last nonzero
/// coefficient (a zero polynomial keeps one zero coefficient).
class MatrixPolynomial {
  public:
    MatrixPolynomial(int k, std::vector<Matrix> coeffs) : k_(k), coeffs_(std::move(coeffs)) {
        if (k_ <= 0) throw std::invalid_argument("MatrixPolynomial: k must be positive");
        if (coeffs_.empty()) throw std::invalid_argument("MatrixPolynomial: empty coefficient list");
        for (const Matrix& c : coeffs_) {
            if (c.rows() != k_ || c.cols() != k_) {
                std::ostringstream os;
                os << "MatrixPolynomial: coefficient is " << c.rows() << "x" << c.cols()
                   << ", expected " << k_ << "x" << k_;
                throw std::invalid_argument(os.str());
            }
        }
        while (coeffs_.size() > 1 && coeffs_.back().isZero(0.0)) coeffs_.pop_back();
    }

    static MatrixPolynomial constant(const Matrix& c) {
        return MatrixPolynomial(static_cast<int>(c.rows()), {c});
    }

    int k() const { return k_; }
    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    const Matrix& coeff(int i) const { return coeffs_.at(static_cast<std::size_t>(i)); }
    const std::vector<Matrix>& coeffs() const { return coeffs_; }

    bool is_monic() const { return coeffs_.back().isIdentity(1e-14); }

  private:
    int k_;
    std::vector<Matrix> coeffs_;
};

/// Evaluates the polynomial at a complex scalar by Horner's scheme.
inline ComplexMatrix poly_eval(const MatrixPolynomial& poly, Complex z) {
    const int d = poly.degree();
    ComplexMatrix acc = poly.coeff(d).cast<Complex>();
    for (int i = d - 1; i >= 0; --i) {
        acc = acc * z + poly.coeff(i).cast<Complex>();
    }
    return acc;
}

inline MatrixPolynomial poly_mul(const MatrixPolynomial& a, const MatrixPolynomial& b) {
    if (a.k() != b.k()) throw std::invalid_argument("poly_mul: size mismatch");
    std::vector<Matrix> out(static_cast<std::size_t>(a.degree() + b.degree()) + 1,
                            Matrix::Zero(a.k(), a.k()));
    for (int i = 0; i <= a.degree(); ++i)
        for (int j = 0; j <= b.degree(); ++j) out[static_cast<std::size_t>(i + j)] += a.coeff(i) * b.coeff(j);
    return MatrixPolynomial(a.k(), std::move(out));
}

/// Block companion matrix of the monic-normalized polynomial
/// z^d I + M_{d-1} z^{d-1} + ... + M_0: identity super-diagonal blocks,
/// bottom block row (-M_0 ... -M_{d-1}).
inline Matrix companion_matrix(const std::vector<Matrix>& monic_lower_coeffs) {
    const int d = static_cast<int>(monic_lower_coeffs.size());
    const int k = static_cast<int>(monic_lower_coeffs.front().rows());
    Matrix comp = Matrix::Zero(k * d, k * d);
    for (int j = 0; j + 1 < d; ++j) {
        comp.block(j * k, (j + 1) * k, k, k) = Matrix::Identity(k, k);
    }
    for (int j = 0; j < d; ++j) {
        comp.block((d - 1) * k, j * k, k, k) = -monic_lower_coeffs[static_cast<std::size_t>(j)];
    }
    return comp;
}

/// All k*deg zeros (with multiplicity) of a matrix polynomial whose leading
/// coefficient is invertible; they are the eigenvalues of the block
/// companion matrix of the monic normalization. The caller supplies the
/// leading inverse, which is sanity checked by its residual.
inline std::vector<Complex> poly_zeros(const MatrixPolynomial& poly, const Matrix& leading_inverse) {
    const int d = poly.degree();
    const int k = poly.k();
    if (leading_inverse.rows() != k || leading_inverse.cols() != k) {
        throw std::invalid_argument("poly_zeros: leading_inverse has wrong shape");
    }
    const double resid = (poly.coeff(d) * leading_inverse - Matrix::Identity(k, k)).norm();
    if (resid > 1e-8) {
        std::ostringstream os;
        os << "poly_zeros: leading coefficient inverse residual " << resid << " exceeds 1e-8";
        throw SingularLeadingCoefficient(os.str());
    }
    if (d == 0) return {};

    std::vector<Matrix> lower(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) lower[static_cast<std::size_t>(i)] = leading_inverse * poly.coeff(i);
    Eigen::EigenSolver<Matrix> es(companion_matrix(lower), /*computeEigenvectors=*/false);
    std::vector<Complex> zeros(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(zeros.begin(), zeros.end(), [](Complex lhs, Complex rhs) {
        if (lhs.real() != rhs.real()) return lhs.real() < rhs.real();
        return lhs.imag() < rhs.imag();
    });
    return zeros;
}

}  // namespace ccgraph

#pragma once

// Shared fixtures and independent reference oracles for the test suites.
// Everything here must stay independent of the implementation paths it is
// used to check: the reference exponential is plain Taylor plus squaring
// (not Pade), the Gramian reference is Simpson quadrature (not Van Loan /
// Lyapunov), and fixture realizations are written out by hand.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ccgraph/matrix_polynomial.hpp"
#include "ccgraph/model.hpp"

namespace testsupport {

using ccgraph::Complex;
using ccgraph::Matrix;
using ccgraph::MatrixPolynomial;
using ccgraph::ModelSpec;
using ccgraph::Vector;

// exp(M t) by scaled Taylor series, squared back. Slow and simple on
// purpose; shares no code with ccgraph::mat_exp.
inline Matrix reference_expm(const Matrix& M, double t = 1.0) {
    Matrix B = M * t;
    int squarings = 0;
    double norm = B.cwiseAbs().rowwise().sum().maxCoeff();
    while (norm > 0.5) {
        B *= 0.5;
        norm *= 0.5;
        ++squarings;
    }
    Matrix term = Matrix::Identity(M.rows(), M.cols());
    Matrix acc = term;
    for (int i = 1; i <= 40; ++i) {
        term = (term * B) / static_cast<double>(i);
        acc += term;
        if (term.norm() < 1e-18 * acc.norm()) break;
    }
    for (int i = 0; i < squarings; ++i) acc = acc * acc;
    return acc;
}

// Composite Simpson quadrature of integral_0^T f(u) du for matrix-valued f.
template <typename F>
Matrix simpson(F&& f, double T, int intervals) {
    if (intervals % 2 != 0) ++intervals;
    const double h = T / intervals;
    Matrix acc = f(0.0) + f(T);
    for (int i = 1; i < intervals; ++i) {
        acc += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return acc * (h / 3.0);
}

// Greedy multiset match of complex lists within a per-element tolerance.
inline bool multiset_match(std::vector<Complex> lhs, std::vector<Complex> rhs, double tol) {
    if (lhs.size() != rhs.size()) return false;
    for (Complex z : lhs) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            const double d = std::abs(z - rhs[i]);
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        if (best > tol) return false;
        rhs.erase(rhs.begin() + static_cast<std::ptrdiff_t>(best_i));
    }
    return true;
}

// ---- Paper example fixtures -------------------------------------------

// MCARMA(2,1) with P = (z+2)^2 I_2, Q = (z+1) I_2.
inline ModelSpec example_a(double sigma12 = 0.0) {
    const Matrix I = Matrix::Identity(2, 2);
    MatrixPolynomial P(2, {4 * I, 4 * I, I});
    MatrixPolynomial Q(2, {I, I});
    Matrix sigma(2, 2);
    sigma << 1.0, sigma12, sigma12, 1.0;
    return ModelSpec(2, 2, 1, P, Q, sigma, std::make_pair(P, Q));
}

// MCARMA(3,1) with P = diag((z+2)^3, (z+1)^3), Q = -[[z+2, 1], [1, z+2]],
// plus the AR/MA pair giving the same transfer function.
inline ModelSpec example_b(double sigma12 = 0.0) {
    Matrix c0(2, 2), c1(2, 2), c2(2, 2);
    const Matrix I = Matrix::Identity(2, 2);
    c0 << 8, 0, 0, 1;
    c1 << 12, 0, 0, 3;
    c2 << 6, 0, 0, 3;
    MatrixPolynomial P(2, {c0, c1, c2, I});
    Matrix q0(2, 2);
    q0 << -2, -1, -1, -2;
    MatrixPolynomial Q(2, {q0, -I});

    Matrix s0(2, 2), s1(2, 2), s2(2, 2);
    s0 << 5.25, -2.5, -1, 2;
    s1 << 8.75, -2.75, -2, 5;
    s2 << 5, -0.75, -1, 4;
    MatrixPolynomial Pstar(2, {s0, s1, s2, I});
    Matrix t0(2, 2);
    t0 << -1, -0.25, 0, -3;
    MatrixPolynomial Qstar(2, {t0, -I});

    Matrix sigma(2, 2);
    sigma << 1.0, sigma12, sigma12, 1.0;
    return ModelSpec(2, 3, 1, P, Q, sigma, std::make_pair(Pstar, Qstar));
}

// Scalar CARMA(2,1) with P = (z+2)^2, Q = z + 1.
inline ModelSpec scalar_model() {
    MatrixPolynomial P(1, {4 * Matrix::Ones(1, 1), 4 * Matrix::Ones(1, 1), Matrix::Ones(1, 1)});
    MatrixPolynomial Q(1, {Matrix::Ones(1, 1), Matrix::Ones(1, 1)});
    return ModelSpec(1, 2, 1, P, Q, Matrix::Ones(1, 1));
}

// ---- Random stable models ---------------------------------------------

// Matrix with all eigenvalue real parts <= -margin: negative definite
// symmetric part plus a skew perturbation (Bendixson bound).
inline Matrix random_stable_matrix(std::mt19937_64& rng, int k, double margin) {
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    Matrix G(k, k), K(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            G(i, j) = unit(rng);
            K(i, j) = unit(rng);
        }
    }
    return -(margin * Matrix::Identity(k, k) + G * G.transpose()) + (K - K.transpose());
}

inline Matrix random_invertible(std::mt19937_64& rng, int k) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Matrix G(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) G(i, j) = unit(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Qm = qr.householderQ();
    std::uniform_real_distribution<double> diag(0.5, 2.0);
    Vector d(k);
    for (int i = 0; i < k; ++i) d(i) = diag(rng);
    return Qm * d.asDiagonal();
}

inline Matrix random_spd(std::mt19937_64& rng, int k) {
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    Matrix G(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) G(i, j) = unit(rng);
    }
    return Matrix::Identity(k, k) + G * G.transpose();
}

// Stable model via products of monic linear factors: P = prod (zI - S_i),
// Q = Cq * prod (zI - T_j) with all factor spectra in Re < -0.3 and Cq well
// conditioned. Generic draws are coprime; callers may resample on the rare
// validation failure.
inline ModelSpec random_stable_model(std::mt19937_64& rng, int k, int p, int q) {
    std::uniform_real_distribution<double> margin(0.3, 1.2);
    const Matrix I = Matrix::Identity(k, k);

    MatrixPolynomial P = MatrixPolynomial::constant(I);
    for (int i = 0; i < p; ++i) {
        const Matrix S = random_stable_matrix(rng, k, margin(rng));
        P = ccgraph::poly_mul(P, MatrixPolynomial(k, {-S, I}));
    }
    MatrixPolynomial Q = MatrixPolynomial::constant(random_invertible(rng, k));
    for (int j = 0; j < q; ++j) {
        const Matrix T = random_stable_matrix(rng, k, margin(rng));
        Q = ccgraph::poly_mul(Q, MatrixPolynomial(k, {-T, I}));
    }
    return ModelSpec(k, p, q, P, Q, random_spd(rng, k));
}

// Draws until validation passes (tries are generous; generic draws pass).
inline ModelSpec random_accepted_model(std::mt19937_64& rng, int k, int p, int q) {
    for (int attempt = 0; attempt < 50; ++attempt) {
        ModelSpec spec = random_stable_model(rng, k, p, q);
        if (ccgraph::validate_iccss(spec).accepted) return spec;
    }
    throw std::runtime_error("random_accepted_model: no accepted draw in 50 attempts");
}

// The model corpus used by the property suites: k in {1,2,3}, p <= 4, q < p.
inline std::vector<ModelSpec> model_corpus(std::uint64_t seed, int count) {
    std::mt19937_64 rng(seed);
    std::vector<ModelSpec> out;
    std::uniform_int_distribution<int> pick_k(1, 3);
    while (static_cast<int>(out.size()) < count) {
        const int k = pick_k(rng);
        std::uniform_int_distribution<int> pick_p(2, 4);
        const int p = pick_p(rng);
        std::uniform_int_distribution<int> pick_q(1, p - 1);
        const int q = pick_q(rng);
        out.push_back(random_accepted_model(rng, k, p, q));
    }
    return out;
}

}  // namespace testsupport

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <sstream>
#include <vector>

#include "ccgraph/common.hpp"
#include "ccgraph/kernels.hpp"
#include "ccgraph/model.hpp"
#include "ccgraph/rng.hpp"

namespace ccgraph {

struct SimulationConfig {
    enum class Init { stationary, zero };
    double dt = 1e-3;
    long steps = 1000;
    int n_paths = 1;
    std::uint64_t seed = 0;
    Init init = Init::stationary;
};

struct Discretization {
    Matrix Phi;  // exp(A dt)
    Matrix G;    // one-step noise covariance
    Matrix L_G;  // factor with L_G L_G^T = G
};

namespace detail {

/// Factor of a PSD matrix via pivoted LDLT with small negative pivots
/// clamped to zero; eigenvalues below -1e-10 * ||G|| are a hard failure.
inline Matrix psd_factor(const Matrix& G, const char* what) {
    const double scale = G.norm();
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(scale, 1.0)) {
        std::ostringstream os;
        os << what << ": matrix has eigenvalue " << es.eigenvalues().minCoeff()
           << ", not positive semidefinite";
        throw FactorizationFailure(os.str());
    }
    Eigen::LDLT<Matrix> ldlt(G);
    Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Matrix L = ldlt.matrixL();
    Matrix factor = ldlt.transpositionsP().transpose() * Matrix(L * d.asDiagonal());
    return factor;
}

}  // namespace detail

/// Exact one-step discretization of the state equation: transition
/// Phi = exp(A dt) and noise covariance G = integral_0^dt exp(Au) B Sigma
/// B^T exp(A^T u) du, both from one Van Loan block exponential.
inline Discretization discretize(const ControllerRealization& real, const Matrix& Sigma, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be positive");
    Discretization d;
    van_loan_discretize(real.A, real.B * Sigma * real.B.transpose(), dt, d.Phi, d.G);
    d.L_G = detail::psd_factor(d.G, "discretize");
    return d;
}

struct Path {
    std::uint64_t seed = 0;  // derived sub-stream key
    Matrix X;                // n x (steps+1)
    Matrix Xq;               // kq x (steps+1), first kq rows of X
    Matrix Y;                // k x (steps+1)
    std::vector<Matrix> DY;  // DY[m]: k x (steps+1), m = 0..p-q-1
};

struct PathSet {
    double dt = 0.0;
    Vector t;  // t_i = i dt
    std::vector<Path> paths;
};

/// Simulates X_{i+1} = Phi X_i + L_G xi_i with iid standard normal xi and
/// either a stationary draw or zero as the initial state. Output blocks:
/// Y = Cbar X exactly, and the derivative series
///   DY[m] = sum_{i=0}^{q} C_i X^{(m+1+i)},  m = 0..p-q-1,
/// read off the state blocks (so DY[0] = Y and DY[p-q-1] = Cubar X).
/// Each path draws from its own counter stream derived from (seed, path
/// index), so results are independent of scheduling.
inline PathSet simulate_paths(const ControllerRealization& real, const Matrix& Sigma,
                              const SimulationConfig& config) {
    if (config.dt <= 0.0 || config.steps <= 0 || config.n_paths <= 0) {
        throw std::invalid_argument("simulate_paths: dt, steps and n_paths must be positive");
    }
    const int n = real.n();
    const int k = real.k;
    const int kq = real.nq();
    const int pq = real.p - real.q;
    const long cols = config.steps + 1;

    const Discretization disc = discretize(real, Sigma, config.dt);
    Matrix init_factor = Matrix::Zero(n, n);
    if (config.init == SimulationConfig::Init::stationary) {
        const Matrix gamma = stationary_cov(real.A, real.B * Sigma * real.B.transpose());
        init_factor = detail::psd_factor(gamma, "simulate_paths(stationary init)");
    }

    // C_i blocks of the observation row, reused for the derivative series.
    std::vector<Matrix> c_blocks;
    c_blocks.reserve(static_cast<std::size_t>(real.q) + 1);
    for (int i = 0; i <= real.q; ++i) c_blocks.push_back(real.Cbar.block(0, i * k, k, k));

    PathSet out;
    out.dt = config.dt;
    out.t = Vector::LinSpaced(cols, 0.0, config.dt * static_cast<double>(config.steps));
    out.paths.resize(static_cast<std::size_t>(config.n_paths));

    parallel_for(static_cast<std::size_t>(config.n_paths), [&](std::size_t pi) {
        GaussianStream rng(config.seed, static_cast<std::uint64_t>(pi));
        Path& path = out.paths[pi];
        path.seed = rng.key();
        path.X = Matrix::Zero(n, cols);

        Vector x = Vector::Zero(n);
        if (config.init == SimulationConfig::Init::stationary) {
            Vector xi(n);
            for (int i = 0; i < n; ++i) xi(i) = rng.next();
            x = init_factor * xi;
        }
        path.X.col(0) = x;
        Vector noise(n);
        for (long step = 0; step < config.steps; ++step) {
            for (int i = 0; i < n; ++i) noise(i) = rng.next();
            x = disc.Phi * x + disc.L_G * noise;
            path.X.col(step + 1) = x;
        }

        path.Xq = path.X.topRows(kq);
        path.Y = real.Cbar * path.X;
        path.DY.assign(static_cast<std::size_t>(pq), Matrix::Zero(k, cols));
        for (int m = 0; m < pq; ++m) {
            Matrix& dym = path.DY[static_cast<std::size_t>(m)];
            for (int i = 0; i <= real.q; ++i) {
                // X^{(m+1+i)} is the (m+i)-th k-block (zero based).
                dym += c_blocks[static_cast<std::size_t>(i)] * path.X.middleRows((m + i) * k, k);
            }
        }
    });
    return out;
}

struct CsvColumns {
    bool outputs = true;
    bool derivatives = false;
    bool state = false;
};

/// Long format: path id, time, then the selected columns.
inline void write_csv(const PathSet& ps, std::ostream& os, const CsvColumns& cols = {}) {
    if (ps.paths.empty()) return;
    const Path& first = ps.paths.front();
    const int k = static_cast<int>(first.Y.rows());
    const int n = static_cast<int>(first.X.rows());
    const int n_dy = static_cast<int>(first.DY.size());

    os << "path,t";
    if (cols.outputs) {
        for (int i = 1; i <= k; ++i) os << ",Y_" << i;
    }
    if (cols.derivatives) {
        for (int m = 1; m < n_dy; ++m) {
            for (int i = 1; i <= k; ++i) os << ",DY_" << m << "_" << i;
        }
    }
    if (cols.state) {
        for (int i = 1; i <= n; ++i) os << ",X_" << i;
    }
    os << "\n";

    std::ostringstream line;
    line.precision(17);
    for (std::size_t pi = 0; pi < ps.paths.size(); ++pi) {
        const Path& path = ps.paths[pi];
        for (Eigen::Index c = 0; c < path.Y.cols(); ++c) {
            line.str(std::string());
            line << pi << ',' << ps.t(c);
            if (cols.outputs) {
                for (int i = 0; i < k; ++i) line << ',' << path.Y(i, c);
            }
            if (cols.derivatives) {
                for (int m = 1; m < n_dy; ++m) {
                    for (int i = 0; i < k; ++i) line << ',' << path.DY[static_cast<std::size_t>(m)](i, c);
                }
            }
            if (cols.state) {
                for (int i = 0; i < n; ++i) line << ',' << path.X(i, c);
            }
            os << line.str() << "\n";
        }
    }
}

}  // namespace ccgraph

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccgraph/common.hpp"
#include "ccgraph/kernels.hpp"
#include "ccgraph/model.hpp"

namespace ccgraph {

/// A scalar condition value counts as zero iff |v| <= abs + rel * scale,
/// where scale is the largest |v| seen in the same condition set. Edge
/// decisions are rank-like, so zero needs a relative meaning; the absolute
/// floor covers the all-zero case.
struct EdgeThresholds {
    double abs = 1e-10;
    double rel = 1e-8;
};

enum class EdgeKind { directed_cg, directed_local, undirected_cg, undirected_local };

struct EdgeDecision {
    int a = 0;  // 1-based vertices
    int b = 0;
    EdgeKind kind = EdgeKind::directed_cg;
    bool absent = false;
    bool marginal = false;  // max condition within 10x of the threshold
    double max_condition = 0.0;
    double threshold = 0.0;
};

namespace detail {

inline EdgeDecision decide(int a, int b, EdgeKind kind, double max_condition,
                           const EdgeThresholds& th) {
    EdgeDecision d;
    d.a = a;
    d.b = b;
    d.kind = kind;
    d.max_condition = max_condition;
    d.threshold = th.abs + th.rel * max_condition;
    d.absent = max_condition <= d.threshold;
    d.marginal = max_condition > d.threshold / 10.0 && max_condition <= 10.0 * d.threshold;
    return d;
}

// Row-vector Krylov walk v^T A^alpha with norm tracking: when the running
// norm passes 1e12 the vector is renormalized and the factor folded back
// into every condition value derived from it.
class ScaledKrylovRow {
  public:
    explicit ScaledKrylovRow(Eigen::RowVectorXd v) : v_(std::move(v)) {}

    void advance(const Matrix& A) {
        v_ = v_ * A;
        const double norm = v_.norm();
        if (norm > 1e12) {
            v_ /= norm;
            scale_ *= norm;
        }
    }

    const Eigen::RowVectorXd& row() const { return v_; }
    double scale() const { return scale_; }

  private:
    Eigen::RowVectorXd v_;
    double scale_ = 1.0;
};

inline void check_pair(int a, int b, int k) {
    if (a == b) throw SameVertex("edge test: a and b must differ");
    if (a < 1 || a > k || b < 1 || b > k) throw std::invalid_argument("edge test: vertex outside 1..k");
}

}  // namespace detail

/// Granger non-causality a -/-> b in the causality graph: all of
///   e_b^T Cbar A^alpha K Lambda^beta Theta e_a,   alpha < kp, beta < kq,
///   e_b^T Cbar A^alpha K_m Theta e_a,             alpha < kp, m < p-q,
/// vanish, with K and K_m the kernel constants of the realization.
inline EdgeDecision directed_edge_absent_cg(const ControllerRealization& real, int a, int b,
                                            const EdgeThresholds& th = {},
                                            const KernelSet* kernels = nullptr) {
    detail::check_pair(a, b, real.k);
    std::optional<KernelSet> owned;
    if (!kernels) kernels = &owned.emplace(real);
    const KernelSet& ks = *kernels;

    const Vector theta_a = real.Theta.col(a - 1);
    const int pq = real.p - real.q;
    double max_cond = 0.0;

    detail::ScaledKrylovRow v(real.Cbar.row(b - 1));
    for (int alpha = 0; alpha < real.n(); ++alpha) {
        const Eigen::RowVectorXd w = v.row() * ks.K();
        Eigen::RowVectorXd u = w;
        for (int beta = 0; beta < real.nq(); ++beta) {
            max_cond = std::max(max_cond, std::abs(u.dot(theta_a)) * v.scale());
            if (beta + 1 < real.nq()) u = u * real.Lambda;
        }
        for (int m = 0; m < pq; ++m) {
            const double c = std::abs((v.row() * ks.Km(m)).dot(theta_a)) * v.scale();
            max_cond = std::max(max_cond, c);
        }
        if (alpha + 1 < real.n()) v.advance(real.A);
    }
    return detail::decide(a, b, EdgeKind::directed_cg, max_cond, th);
}

/// Local variant: the single left factor e_b^T Cubar A replaces the powers
/// A^alpha (kq + (p-q) scalar conditions).
inline EdgeDecision directed_edge_absent_local(const ControllerRealization& real, int a, int b,
                                               const EdgeThresholds& th = {},
                                               const KernelSet* kernels = nullptr) {
    detail::check_pair(a, b, real.k);
    std::optional<KernelSet> owned;
    if (!kernels) kernels = &owned.emplace(real);
    const KernelSet& ks = *kernels;

    const Vector theta_a = real.Theta.col(a - 1);
    const Eigen::RowVectorXd v = real.Cubar.row(b - 1) * real.A;
    double max_cond = 0.0;

    Eigen::RowVectorXd u = v * ks.K();
    for (int beta = 0; beta < real.nq(); ++beta) {
        max_cond = std::max(max_cond, std::abs(u.dot(theta_a)));
        if (beta + 1 < real.nq()) u = u * real.Lambda;
    }
    for (int m = 0; m < real.p - real.q; ++m) {
        max_cond = std::max(max_cond, std::abs((v * ks.Km(m)).dot(theta_a)));
    }
    return detail::decide(a, b, EdgeKind::directed_local, max_cond, th);
}

/// Contemporaneous uncorrelatedness a ~/~ b: all bilinear forms
/// e_a^T Cbar A^alpha B Sigma B^T (A^T)^beta Cbar^T e_b, alpha,beta < kp.
inline EdgeDecision undirected_edge_absent_cg(const ControllerRealization& real, const Matrix& Sigma,
                                              int a, int b, const EdgeThresholds& th = {}) {
    detail::check_pair(a, b, real.k);
    const int n = real.n();

    std::vector<Eigen::RowVectorXd> xa, xb;  // rows (e C A^alpha B), prescaled
    xa.reserve(static_cast<std::size_t>(n));
    xb.reserve(static_cast<std::size_t>(n));
    detail::ScaledKrylovRow ra(real.Cbar.row(a - 1));
    detail::ScaledKrylovRow rb(real.Cbar.row(b - 1));
    for (int i = 0; i < n; ++i) {
        xa.push_back(ra.scale() * (ra.row() * real.B));
        xb.push_back(rb.scale() * (rb.row() * real.B));
        if (i + 1 < n) {
            ra.advance(real.A);
            rb.advance(real.A);
        }
    }

    double max_cond = 0.0;
    for (int alpha = 0; alpha < n; ++alpha) {
        const Eigen::RowVectorXd left = xa[static_cast<std::size_t>(alpha)] * Sigma;
        for (int beta = 0; beta < n; ++beta) {
            max_cond = std::max(max_cond, std::abs(left.dot(xb[static_cast<std::size_t>(beta)])));
        }
    }
    return detail::decide(a, b, EdgeKind::undirected_cg, max_cond, th);
}

/// Local variant: the single scalar (C_q Sigma C_q^T)_{ab}.
inline EdgeDecision undirected_edge_absent_local(const ControllerRealization& real, const Matrix& Sigma,
                                                 int a, int b, const EdgeThresholds& th = {}) {
    detail::check_pair(a, b, real.k);
    const Matrix cq = real.Cbar.block(0, real.q * real.k, real.k, real.k);
    const double cond = std::abs((cq * Sigma * cq.transpose())(a - 1, b - 1));
    return detail::decide(a, b, EdgeKind::undirected_local, cond, th);
}

/// Exponential-form directed conditions sampled on (h, t) grids; the
/// independent cross-check for the power-form decisions. The cg variant
/// samples e_b^T M(h) e^{Lambda t} Theta e_a and e_b^T M_m(h) Theta e_a;
/// the local variant uses the derivative kernels at zero (no h grid).
inline bool exp_form_directed_absent(const ControllerRealization& real, int a, int b,
                                     const std::vector<double>& h_grid,
                                     const std::vector<double>& t_grid, bool local_variant,
                                     const EdgeThresholds& th = {}) {
    detail::check_pair(a, b, real.k);
    if (t_grid.empty() || (!local_variant && h_grid.empty())) {
        throw std::invalid_argument("exp_form_directed_absent: empty grid");
    }
    KernelSet ks(real);
    const Vector theta_a = real.Theta.col(a - 1);

    std::vector<Vector> propagated;  // e^{Lambda t} Theta e_a per grid t
    propagated.reserve(t_grid.size());
    for (double t : t_grid) propagated.push_back(mat_exp(real.Lambda, t) * theta_a);

    double max_cond = 0.0;
    auto scan = [&](const Matrix& M, const std::vector<Matrix>& Mm) {
        const Eigen::RowVectorXd mb = M.row(b - 1);
        for (const Vector& pt : propagated) max_cond = std::max(max_cond, std::abs(mb.dot(pt)));
        for (const Matrix& mm : Mm) {
            max_cond = std::max(max_cond, std::abs(mm.row(b - 1).dot(theta_a)));
        }
    };

    if (local_variant) {
        Matrix M = ks.M_deriv0(KernelSide::bottom);
        std::vector<Matrix> Mm;
        for (int m = 0; m < real.p - real.q; ++m) Mm.push_back(ks.Mm_deriv0(m, KernelSide::bottom));
        scan(M, Mm);
    } else {
        Matrix M;
        std::vector<Matrix> Mm;
        for (double h : h_grid) {
            ks.at(h, KernelSide::top, M, Mm);
            scan(M, Mm);
        }
    }
    return max_cond <= th.abs + th.rel * max_cond;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    if (n == 1) {
        out.push_back(lo);
        return out;
    }
    for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * static_cast<double>(i) / (n - 1));
    return out;
}

struct CausalityGraph {
    enum class Variant { cg, local };
    Variant variant = Variant::cg;
    int k = 0;
    std::vector<std::pair<int, int>> directed;    // ordered pairs (a, b): a -> b
    std::vector<std::pair<int, int>> undirected;  // unordered, stored with a < b
    std::vector<EdgeDecision> decisions;

    bool has_directed(int a, int b) const {
        return std::find(directed.begin(), directed.end(), std::make_pair(a, b)) != directed.end();
    }
    bool has_undirected(int a, int b) const {
        auto e = std::make_pair(std::min(a, b), std::max(a, b));
        return std::find(undirected.begin(), undirected.end(), e) != undirected.end();
    }
};

struct GraphPair {
    CausalityGraph cg;
    CausalityGraph local;
};

/// Runs every pairwise characterisation and assembles both graphs. Requires
/// an accepted validation report: the well-definedness theorem needs the
/// model assumptions plus a positive definite noise covariance. Violations
/// of the theory-guaranteed subset relation (local edges form a subset of
/// causality-graph edges) indicate numerical-threshold pathology and abort.
inline GraphPair build_graphs(const ControllerRealization& real, const Matrix& Sigma,
                              const ValidationReport& validation, const EdgeThresholds& th = {}) {
    if (!validation.accepted) {
        throw NotValidated("build_graphs: model failed validation; graphs are not well defined");
    }
    const int k = real.k;
    GraphPair out;
    out.cg.variant = CausalityGraph::Variant::cg;
    out.local.variant = CausalityGraph::Variant::local;
    out.cg.k = out.local.k = k;

    KernelSet ks(real);

    struct PairTask {
        int a, b;
        bool ordered;  // directed test for (a, b); otherwise undirected for a < b
    };
    std::vector<PairTask> tasks;
    for (int a = 1; a <= k; ++a) {
        for (int b = 1; b <= k; ++b) {
            if (a != b) tasks.push_back({a, b, true});
        }
    }
    for (int a = 1; a <= k; ++a) {
        for (int b = a + 1; b <= k; ++b) tasks.push_back({a, b, false});
    }

    std::vector<std::array<EdgeDecision, 2>> results(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t i) {
        const PairTask& task = tasks[i];
        if (task.ordered) {
            results[i][0] = directed_edge_absent_cg(real, task.a, task.b, th, &ks);
            results[i][1] = directed_edge_absent_local(real, task.a, task.b, th, &ks);
        } else {
            results[i][0] = undirected_edge_absent_cg(real, Sigma, task.a, task.b, th);
            results[i][1] = undirected_edge_absent_local(real, Sigma, task.a, task.b, th);
        }
    });

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const PairTask& task = tasks[i];
        const EdgeDecision& cg_dec = results[i][0];
        const EdgeDecision& local_dec = results[i][1];
        out.cg.decisions.push_back(cg_dec);
        out.local.decisions.push_back(local_dec);
        if (task.ordered) {
            if (!cg_dec.absent) out.cg.directed.emplace_back(task.a, task.b);
            if (!local_dec.absent) out.local.directed.emplace_back(task.a, task.b);
        } else {
            if (!cg_dec.absent) out.cg.undirected.emplace_back(task.a, task.b);
            if (!local_dec.absent) out.local.undirected.emplace_back(task.a, task.b);
        }
    }

    for (const auto& e : out.local.directed) {
        if (!out.cg.has_directed(e.first, e.second)) {
            std::ostringstream os;
            os << "build_graphs: local directed edge " << e.first << "->" << e.second
               << " missing from the causality graph; threshold pathology";
            throw std::runtime_error(os.str());
        }
    }
    for (const auto& e : out.local.undirected) {
        if (!out.cg.has_undirected(e.first, e.second)) {
            std::ostringstream os;
            os << "build_graphs: local undirected edge " << e.first << "--" << e.second
               << " missing from the causality graph; threshold pathology";
            throw std::runtime_error(os.str());
        }
    }
    return out;
}

/// Convenience overload: validates the spec, builds the realization, then
/// the graphs.
inline GraphPair build_graphs(const ModelSpec& spec, const EdgeThresholds& th = {}) {
    ValidationReport rep = validate_iccss(spec);
    if (!rep.accepted) {
        throw NotValidated("build_graphs: model failed validation; graphs are not well defined");
    }
    return build_graphs(build_controller_form(spec), spec.sigma_L, rep, th);
}

/// DOT rendering: solid arrows for directed edges, dashed undirected lines,
/// lexicographic ordering throughout so output is byte stable.
inline std::string to_dot(const CausalityGraph& graph) {
    std::ostringstream os;
    os << "digraph " << (graph.variant == CausalityGraph::Variant::cg ? "causality" : "local_causality")
       << " {\n";
    for (int v = 1; v <= graph.k; ++v) os << "  " << v << " [label=\"Y" << v << "\"];\n";

    auto directed = graph.directed;
    std::sort(directed.begin(), directed.end());
    for (const auto& e : directed) os << "  " << e.first << " -> " << e.second << ";\n";

    auto undirected = graph.undirected;
    std::sort(undirected.begin(), undirected.end());
    for (const auto& e : undirected) {
        os << "  " << e.first << " -> " << e.second << " [dir=none, style=dashed];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace ccgraph

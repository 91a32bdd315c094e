#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ccgraph/common.hpp"
#include "ccgraph/graph.hpp"
#include "ccgraph/model.hpp"
#include "ccgraph/oracle.hpp"

namespace ccgraph {

using Json = nlohmann::ordered_json;

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline Matrix matrix_from_json(const Json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw ParseError(std::string(what) + ": expected nested array");
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
    if (cols == 0) throw ParseError(std::string(what) + ": expected row-major nested arrays");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        const Json& row = j.at(r);
        if (!row.is_array() || row.size() != cols) {
            throw ParseError(std::string(what) + ": ragged rows");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row.at(c).get<double>();
        }
    }
    return m;
}

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixPolynomial poly_from_json(const Json& j, int k, const char* what) {
    if (!j.is_object() || !j.contains("coeffs")) {
        throw ParseError(std::string(what) + ": expected object with \"coeffs\"");
    }
    const Json& coeffs = j.at("coeffs");
    if (!coeffs.is_array() || coeffs.empty()) {
        throw ParseError(std::string(what) + ".coeffs: expected non-empty array of matrices");
    }
    std::vector<Matrix> mats;
    mats.reserve(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        Matrix c = matrix_from_json(coeffs.at(i), what);
        if (c.rows() != k || c.cols() != k) {
            std::ostringstream os;
            os << what << ".coeffs[" << i << "]: expected " << k << "x" << k << " matrix";
            throw ParseError(os.str());
        }
        mats.push_back(std::move(c));
    }
    return MatrixPolynomial(k, std::move(mats));
}

inline Json poly_to_json(const MatrixPolynomial& p) {
    Json coeffs = Json::array();
    for (const Matrix& c : p.coeffs()) coeffs.push_back(matrix_to_json(c));
    return Json{{"coeffs", std::move(coeffs)}};
}

inline Json complex_list_to_json(const std::vector<Complex>& zs) {
    Json out = Json::array();
    for (Complex z : zs) out.push_back(Json::array({z.real(), z.imag()}));
    return out;
}

}  // namespace detail

/// Model file: coefficients ascending in power, matrices as row-major
/// nested arrays, optional "mcarma" with the AR/MA pair.
inline ModelSpec model_from_json(const Json& j) {
    for (const char* key : {"k", "p", "q", "P", "Q", "sigma_L"}) {
        if (!j.contains(key)) throw ParseError(std::string("model: missing field \"") + key + "\"");
    }
    const int k = j.at("k").get<int>();
    const int p = j.at("p").get<int>();
    const int q = j.at("q").get<int>();
    if (k <= 0) throw ParseError("model: k must be positive");

    MatrixPolynomial P = detail::poly_from_json(j.at("P"), k, "P");
    MatrixPolynomial Q = detail::poly_from_json(j.at("Q"), k, "Q");
    Matrix sigma = detail::matrix_from_json(j.at("sigma_L"), "sigma_L");

    std::optional<std::pair<MatrixPolynomial, MatrixPolynomial>> mcarma;
    if (j.contains("mcarma") && !j.at("mcarma").is_null()) {
        const Json& mc = j.at("mcarma");
        if (!mc.contains("Pstar") || !mc.contains("Qstar")) {
            throw ParseError("model.mcarma: needs \"Pstar\" and \"Qstar\"");
        }
        mcarma.emplace(detail::poly_from_json(mc.at("Pstar"), k, "mcarma.Pstar"),
                       detail::poly_from_json(mc.at("Qstar"), k, "mcarma.Qstar"));
    }
    try {
        return ModelSpec(k, p, q, std::move(P), std::move(Q), std::move(sigma), std::move(mcarma));
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
}

inline ModelSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        // e.what() carries the byte position of the defect.
        throw ParseError(std::string("model file ") + path + ": " + e.what());
    }
    return model_from_json(j);
}

inline Json model_to_json(const ModelSpec& spec) {
    Json j;
    j["k"] = spec.k;
    j["p"] = spec.p;
    j["q"] = spec.q;
    j["P"] = detail::poly_to_json(spec.P);
    j["Q"] = detail::poly_to_json(spec.Q);
    j["sigma_L"] = detail::matrix_to_json(spec.sigma_L);
    if (spec.mcarma) {
        j["mcarma"] = Json{{"Pstar", detail::poly_to_json(spec.mcarma->first)},
                           {"Qstar", detail::poly_to_json(spec.mcarma->second)}};
    }
    return j;
}

inline Json validation_report_to_json(const ValidationReport& rep) {
    Json j;
    j["accepted"] = rep.accepted;
    j["zeros_P"] = detail::complex_list_to_json(rep.zeros_P);
    j["zeros_Q"] = detail::complex_list_to_json(rep.zeros_Q);
    j["rank_Cq"] = rep.rank_Cq;
    j["sigma_L_min_eig"] = rep.sigma_L_min_eig;
    j["minimal"] = rep.minimal;
    j["failures"] = rep.failures;
    return j;
}

inline const char* edge_kind_name(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::directed_cg: return "directed_cg";
        case EdgeKind::directed_local: return "directed_local";
        case EdgeKind::undirected_cg: return "undirected_cg";
        case EdgeKind::undirected_local: return "undirected_local";
    }
    return "unknown";
}

inline Json graph_to_json(const CausalityGraph& g) {
    Json j;
    j["variant"] = g.variant == CausalityGraph::Variant::cg ? "cg" : "local";
    Json vertices = Json::array();
    for (int v = 1; v <= g.k; ++v) vertices.push_back(v);
    j["vertices"] = std::move(vertices);

    Json directed = Json::array();
    for (const auto& e : g.directed) directed.push_back(Json::array({e.first, e.second}));
    j["directed"] = std::move(directed);

    Json undirected = Json::array();
    for (const auto& e : g.undirected) undirected.push_back(Json::array({e.first, e.second}));
    j["undirected"] = std::move(undirected);

    Json decisions = Json::array();
    for (const EdgeDecision& d : g.decisions) {
        decisions.push_back(Json{{"a", d.a},
                                 {"b", d.b},
                                 {"kind", edge_kind_name(d.kind)},
                                 {"absent", d.absent},
                                 {"marginal", d.marginal},
                                 {"max_condition", d.max_condition},
                                 {"threshold", d.threshold}});
    }
    j["decisions"] = std::move(decisions);
    return j;
}

inline Json graphs_to_json(const GraphPair& gp) {
    return Json{{"cg", graph_to_json(gp.cg)}, {"local", graph_to_json(gp.local)}};
}

/// Parses the output of graph_to_json back into edge sets (round-trip
/// support for scripting; decisions are restored too).
inline CausalityGraph graph_from_json(const Json& j) {
    CausalityGraph g;
    g.variant = j.at("variant").get<std::string>() == "cg" ? CausalityGraph::Variant::cg
                                                           : CausalityGraph::Variant::local;
    g.k = static_cast<int>(j.at("vertices").size());
    for (const Json& e : j.at("directed")) g.directed.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    for (const Json& e : j.at("undirected")) {
        g.undirected.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    for (const Json& d : j.at("decisions")) {
        EdgeDecision dec;
        dec.a = d.at("a").get<int>();
        dec.b = d.at("b").get<int>();
        const std::string kind = d.at("kind").get<std::string>();
        if (kind == "directed_cg") dec.kind = EdgeKind::directed_cg;
        else if (kind == "directed_local") dec.kind = EdgeKind::directed_local;
        else if (kind == "undirected_cg") dec.kind = EdgeKind::undirected_cg;
        else dec.kind = EdgeKind::undirected_local;
        dec.absent = d.at("absent").get<bool>();
        dec.marginal = d.at("marginal").get<bool>();
        dec.max_condition = d.at("max_condition").get<double>();
        dec.threshold = d.at("threshold").get<double>();
        g.decisions.push_back(dec);
    }
    return g;
}

inline Json verification_to_json(const VerificationSummary& sum) {
    Json j;
    j["accepted"] = sum.accepted;
    j["inversion"] = Json{{"mean_rel_rmse", sum.inversion_rmse}, {"ok", sum.inversion_ok}};

    Json residual;
    residual["h"] = sum.residual.h;
    residual["htilde"] = sum.residual.htilde;
    residual["all_agree"] = sum.residual.all_agree;
    residual["whiteness_ok"] = sum.residual.whiteness_ok;
    Json rows = Json::array();
    for (const ResidualPairRow& r : sum.residual.rows) {
        rows.push_back(Json{{"a", r.a},
                            {"b", r.b},
                            {"empirical", r.empirical},
                            {"analytic", r.analytic},
                            {"se", r.se},
                            {"n_samples", r.n_samples},
                            {"agree", r.agree}});
    }
    residual["rows"] = std::move(rows);
    double worst_corr = 0.0;
    for (const WhitenessRow& w : sum.residual.whiteness) {
        worst_corr = std::max(worst_corr, std::abs(w.corr));
    }
    residual["max_abs_lagged_corr"] = worst_corr;
    j["residual"] = std::move(residual);

    Json local;
    local["smallest_h_agrees"] = sum.local_noise.smallest_h_agrees;
    Json lrows = Json::array();
    for (const LocalNoiseRow& r : sum.local_noise.rows) {
        lrows.push_back(Json{{"h", r.h},
                             {"a", r.a},
                             {"b", r.b},
                             {"empirical", r.empirical},
                             {"analytic_h", r.analytic_h},
                             {"limit", r.limit},
                             {"se", r.se},
                             {"agree_limit", r.agree_limit}});
    }
    local["rows"] = std::move(lrows);
    j["local_noise"] = std::move(local);

    Json granger = Json::array();
    for (const GrangerRow& r : sum.granger) {
        granger.push_back(Json{{"a", r.a},
                               {"b", r.b},
                               {"h", r.h},
                               {"lags", r.lags},
                               {"lag_stride", r.lag_stride},
                               {"mse_full", r.mse_full},
                               {"mse_reduced", r.mse_reduced},
                               {"reduction", r.reduction},
                               {"empirical_causal", r.empirical_causal},
                               {"analytic_present", r.analytic_present},
                               {"agree", r.agree},
                               {"ridge_used", r.ridge_used},
                               {"ridge_lambda", r.ridge_lambda}});
    }
    j["granger"] = std::move(granger);
    j["granger_all_agree"] = sum.granger_all_agree;
    return j;
}

}  // namespace ccgraph

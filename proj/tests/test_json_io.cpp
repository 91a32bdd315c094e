#include <catch2/catch_amalgamated.hpp>

#include "ccgraph/json_io.hpp"
#include "support.hpp"

using namespace ccgraph;

TEST_CASE("model JSON round trip preserves everything") {
    const auto spec = testsupport::example_b(0.25);
    const Json j = model_to_json(spec);
    const ModelSpec back = model_from_json(j);
    CHECK(back.k == spec.k);
    CHECK(back.p == spec.p);
    CHECK(back.q == spec.q);
    for (int i = 0; i <= spec.P.degree(); ++i) CHECK(back.P.coeff(i) == spec.P.coeff(i));
    for (int i = 0; i <= spec.Q.degree(); ++i) CHECK(back.Q.coeff(i) == spec.Q.coeff(i));
    CHECK(back.sigma_L == spec.sigma_L);
    REQUIRE(back.mcarma.has_value());
    CHECK(back.mcarma->first.coeff(0) == spec.mcarma->first.coeff(0));
}

TEST_CASE("coefficients parse in ascending power order") {
    // P = z^2 + 4z + 3: ascending coeffs [3, 4, 1]; P(0) must be 3.
    const Json j = Json::parse(R"({
        "k": 1, "p": 2, "q": 1,
        "P": {"coeffs": [[[3.0]], [[4.0]], [[1.0]]]},
        "Q": {"coeffs": [[[1.0]], [[1.0]]]},
        "sigma_L": [[1.0]]
    })");
    const ModelSpec spec = model_from_json(j);
    CHECK(poly_eval(spec.P, Complex(0, 0))(0, 0).real() == 3.0);
    CHECK(poly_eval(spec.P, Complex(1, 0))(0, 0).real() == 8.0);
}

TEST_CASE("parse errors carry field context") {
    Json j = model_to_json(testsupport::example_a());
    j.erase("Q");
    CHECK_THROWS_WITH(model_from_json(j), Catch::Matchers::ContainsSubstring("Q"));

    Json ragged = model_to_json(testsupport::example_a());
    ragged["sigma_L"] = Json::array({Json::array({1.0, 0.0}), Json::array({0.0})});
    CHECK_THROWS_AS(model_from_json(ragged), ParseError);

    Json bad_monic = model_to_json(testsupport::example_a());
    bad_monic["P"]["coeffs"][2] = Json::array({Json::array({2.0, 0.0}), Json::array({0.0, 2.0})});
    CHECK_THROWS_WITH(model_from_json(bad_monic), Catch::Matchers::ContainsSubstring("monic"));
}

TEST_CASE("load_model reports the position of malformed JSON") {
    try {
        load_model(std::string(CCGRAPH_MODELS_DIR) + "/malformed.json");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        // nlohmann reports "parse error at line L, column C" plus the file
        // name we prepend.
        const std::string msg = e.what();
        CHECK(msg.find("parse error at") != std::string::npos);
        CHECK(msg.find("malformed.json") != std::string::npos);
    }
}

TEST_CASE("model fixture files load and validate") {
    const ModelSpec a = load_model(std::string(CCGRAPH_MODELS_DIR) + "/example_a.json");
    CHECK(validate_iccss(a).accepted);
    const ModelSpec b = load_model(std::string(CCGRAPH_MODELS_DIR) + "/example_b.json");
    CHECK(validate_iccss(b).accepted);
    const ModelSpec bad = load_model(std::string(CCGRAPH_MODELS_DIR) + "/unstable.json");
    CHECK_FALSE(validate_iccss(bad).accepted);
}

TEST_CASE("validation report serialization") {
    const auto rep = validate_iccss(testsupport::example_b());
    const Json j = validation_report_to_json(rep);
    CHECK(j.at("accepted").get<bool>());
    CHECK(j.at("zeros_P").size() == 6);
    CHECK(j.at("zeros_Q").size() == 2);
    CHECK(j.at("rank_Cq").get<int>() == 2);
    CHECK(j.at("failures").empty());
}

TEST_CASE("graph JSON round trip equals the in-memory graphs") {
    const auto graphs = build_graphs(testsupport::example_b(0.5));
    const Json j = graphs_to_json(graphs);
    const CausalityGraph cg = graph_from_json(j.at("cg"));
    CHECK(cg.k == graphs.cg.k);
    CHECK(cg.directed == graphs.cg.directed);
    CHECK(cg.undirected == graphs.cg.undirected);
    REQUIRE(cg.decisions.size() == graphs.cg.decisions.size());
    for (std::size_t i = 0; i < cg.decisions.size(); ++i) {
        CHECK(cg.decisions[i].absent == graphs.cg.decisions[i].absent);
        CHECK(cg.decisions[i].max_condition == graphs.cg.decisions[i].max_condition);
        CHECK(cg.decisions[i].threshold == graphs.cg.decisions[i].threshold);
    }
    const CausalityGraph local = graph_from_json(j.at("local"));
    CHECK(local.directed == graphs.local.directed);
    CHECK(local.undirected == graphs.local.undirected);
}

TEST_CASE("property: serialized graphs are byte stable across runs") {
    const std::string s1 = graphs_to_json(build_graphs(testsupport::example_b(0.5))).dump(2);
    const std::string s2 = graphs_to_json(build_graphs(testsupport::example_b(0.5))).dump(2);
    CHECK(s1 == s2);
}

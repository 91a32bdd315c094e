// ccgraph command line: validate a model, compute its causality graphs,
// evaluate the spectral density, simulate paths, invert a simulated path,
// or run the full verification battery.
//
// Exit codes: 0 success, 1 I/O or parse failure, 2 validation failure,
// 3 verification-gate failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ccgraph/graph.hpp"
#include "ccgraph/json_io.hpp"
#include "ccgraph/kernels.hpp"
#include "ccgraph/model.hpp"
#include "ccgraph/oracle.hpp"
#include "ccgraph/simulate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitGate = 3;

struct GridSpec {
    double lo = -100.0;
    double hi = 100.0;
    int n = 401;
};

GridSpec parse_grid(const std::string& text) {
    GridSpec g;
    const auto c1 = text.find(':');
    const auto c2 = text.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
        throw CLI::ValidationError("--grid", "expected lo:hi:n");
    }
    g.lo = std::stod(text.substr(0, c1));
    g.hi = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    g.n = std::stoi(text.substr(c2 + 1));
    if (g.n < 2 || !(g.hi > g.lo)) throw CLI::ValidationError("--grid", "need hi > lo and n >= 2");
    return g;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace ccgraph;

    CLI::App app{"causality graphs for controller canonical state space models"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string model_path;
    std::string dot_path, json_path, csv_path;
    std::uint64_t seed = 0;
    double dt = 1e-3;
    long steps = 10000;
    int n_paths = 1;
    EdgeThresholds thresholds;
    std::string grid_text = "-100:100:401";

    auto add_model_opt = [&](CLI::App* cmd) {
        cmd->add_option("--model", model_path, "model JSON file")->required()->check(CLI::ExistingFile);
    };

    // validate
    auto* cmd_validate = app.add_subcommand("validate", "check model admissibility, print the report");
    add_model_opt(cmd_validate);

    // graph
    auto* cmd_graph = app.add_subcommand("graph", "compute causality and local causality graphs");
    add_model_opt(cmd_graph);
    cmd_graph->add_option("--dot", dot_path, "write the causality graph in DOT format");
    cmd_graph->add_option("--json", json_path, "write both graphs with per-pair evidence");
    cmd_graph->add_option("--threshold-abs", thresholds.abs, "absolute zero threshold");
    cmd_graph->add_option("--threshold-rel", thresholds.rel, "relative zero threshold");

    // spectrum
    auto* cmd_spectrum = app.add_subcommand("spectrum", "spectral density eigenvalues on a grid");
    add_model_opt(cmd_spectrum);
    cmd_spectrum->add_option("--grid", grid_text, "lambda grid as lo:hi:n");
    cmd_spectrum->add_option("--csv", csv_path, "output CSV path (default stdout)");

    // simulate
    auto* cmd_simulate = app.add_subcommand("simulate", "simulate stationary sample paths");
    add_model_opt(cmd_simulate);
    cmd_simulate->add_option("--seed", seed, "simulation seed");
    cmd_simulate->add_option("--dt", dt, "time step");
    cmd_simulate->add_option("--steps", steps, "steps per path");
    cmd_simulate->add_option("--paths", n_paths, "number of paths");
    cmd_simulate->add_option("--csv", csv_path, "output CSV path (default stdout)");
    double sigma_scale = 1.0;
    cmd_simulate->add_option("--sigma", sigma_scale, "scale factor applied to sigma_L (0 = no noise)");
    std::string init_mode = "stationary";
    cmd_simulate->add_option("--init", init_mode, "initial state: stationary | zero")
        ->check(CLI::IsMember({"stationary", "zero"}));
    bool sim_with_state = false;
    cmd_simulate->add_flag("--with-state", sim_with_state, "include state columns");
    bool sim_with_derivatives = false;
    cmd_simulate->add_flag("--with-derivatives", sim_with_derivatives, "include derivative columns");

    // invert
    auto* cmd_invert = app.add_subcommand("invert", "recover the state from a simulated output path");
    add_model_opt(cmd_invert);
    cmd_invert->add_option("--seed", seed, "simulation seed");
    cmd_invert->add_option("--dt", dt, "time step");
    cmd_invert->add_option("--steps", steps, "steps per path");
    cmd_invert->add_option("--paths", n_paths, "number of paths");
    double burn_in = -1.0;
    cmd_invert->add_option("--burn-in", burn_in, "burn-in time (default 8 Lambda time constants)");
    double rmse_gate = 0.05;
    cmd_invert->add_option("--rmse-gate", rmse_gate, "maximum accepted mean relative RMSE");

    // verify
    auto* cmd_verify = app.add_subcommand("verify", "run the full oracle battery");
    add_model_opt(cmd_verify);
    cmd_verify->add_option("--seed", seed, "simulation seed")->default_val(42);
    cmd_verify->add_option("--json", json_path, "write the verification report");
    double verify_dt = 5e-3;
    long verify_steps = 24000;
    int verify_paths = 12;
    cmd_verify->add_option("--dt", verify_dt, "time step");
    cmd_verify->add_option("--steps", verify_steps, "steps per path");
    cmd_verify->add_option("--paths", verify_paths, "number of paths");
    cmd_verify->add_option("--threshold-abs", thresholds.abs, "absolute zero threshold");
    cmd_verify->add_option("--threshold-rel", thresholds.rel, "relative zero threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        const ModelSpec spec = load_model(model_path);

        if (*cmd_validate) {
            const ValidationReport rep = validate_iccss(spec);
            std::cout << validation_report_to_json(rep).dump(2) << "\n";
            return rep.accepted ? kExitOk : kExitValidation;
        }

        if (*cmd_graph) {
            const ValidationReport rep = validate_iccss(spec);
            if (!rep.accepted) {
                std::cerr << "model rejected:\n" << validation_report_to_json(rep).dump(2) << "\n";
                return kExitValidation;
            }
            const auto real = build_controller_form(spec);
            const GraphPair graphs = build_graphs(real, spec.sigma_L, rep, thresholds);
            if (!dot_path.empty()) write_text(dot_path, to_dot(graphs.cg));
            if (!json_path.empty()) write_text(json_path, graphs_to_json(graphs).dump(2) + "\n");
            if (dot_path.empty() && json_path.empty()) {
                std::cout << graphs_to_json(graphs).dump(2) << "\n";
            }
            return kExitOk;
        }

        if (*cmd_spectrum) {
            const ValidationReport rep = validate_iccss(spec);
            if (!rep.accepted) {
                std::cerr << "model rejected:\n" << validation_report_to_json(rep).dump(2) << "\n";
                return kExitValidation;
            }
            const auto real = build_controller_form(spec);
            const GridSpec grid = parse_grid(grid_text);
            std::ostringstream os;
            os.precision(17);
            os << "lambda";
            for (int i = 1; i <= spec.k; ++i) os << ",eig_" << i;
            os << "\n";
            for (int i = 0; i < grid.n; ++i) {
                const double lambda = grid.lo + (grid.hi - grid.lo) * i / (grid.n - 1);
                Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(
                    spectral_density(real, spec.sigma_L, lambda));
                os << lambda;
                for (int j = 0; j < spec.k; ++j) os << ',' << es.eigenvalues()(j);
                os << "\n";
            }
            if (csv_path.empty()) std::cout << os.str();
            else write_text(csv_path, os.str());
            return kExitOk;
        }

        if (*cmd_simulate) {
            const ValidationReport rep = validate_iccss(spec);
            if (!rep.accepted) {
                std::cerr << "model rejected:\n" << validation_report_to_json(rep).dump(2) << "\n";
                return kExitValidation;
            }
            const auto real = build_controller_form(spec);
            SimulationConfig cfg;
            cfg.dt = dt;
            cfg.steps = steps;
            cfg.n_paths = n_paths;
            cfg.seed = seed;
            cfg.init = init_mode == "zero" ? SimulationConfig::Init::zero
                                           : SimulationConfig::Init::stationary;
            const PathSet ps = simulate_paths(real, Matrix(sigma_scale * spec.sigma_L), cfg);
            CsvColumns cols;
            cols.outputs = true;
            cols.derivatives = sim_with_derivatives;
            cols.state = sim_with_state;
            if (csv_path.empty()) {
                write_csv(ps, std::cout, cols);
            } else {
                std::ofstream out(csv_path, std::ios::binary);
                if (!out) throw std::runtime_error("cannot write " + csv_path);
                write_csv(ps, out, cols);
            }
            return kExitOk;
        }

        if (*cmd_invert) {
            const ValidationReport rep = validate_iccss(spec);
            if (!rep.accepted) {
                std::cerr << "model rejected:\n" << validation_report_to_json(rep).dump(2) << "\n";
                return kExitValidation;
            }
            const auto real = build_controller_form(spec);
            SimulationConfig cfg;
            cfg.dt = dt;
            cfg.steps = steps;
            cfg.n_paths = n_paths;
            cfg.seed = seed;
            const PathSet ps = simulate_paths(real, spec.sigma_L, cfg);
            const double burn = burn_in >= 0.0 ? burn_in : default_burn_in(real);
            const auto results = invert_state_path(real, ps, burn);
            const double rmse = mean_inversion_rmse(results);
            Json j;
            j["burn_in"] = burn;
            j["mean_rel_rmse"] = rmse;
            Json per_path = Json::array();
            for (const auto& r : results) per_path.push_back(r.rel_rmse);
            j["per_path_rel_rmse"] = per_path;
            j["ok"] = rmse < rmse_gate;
            std::cout << j.dump(2) << "\n";
            return rmse < rmse_gate ? kExitOk : kExitGate;
        }

        if (*cmd_verify) {
            const ValidationReport rep = validate_iccss(spec);
            if (!rep.accepted) {
                std::cerr << "model rejected:\n" << validation_report_to_json(rep).dump(2) << "\n";
                return kExitValidation;
            }
            const auto real = build_controller_form(spec);
            VerificationOptions opt;
            opt.dt = verify_dt;
            opt.steps = verify_steps;
            opt.n_paths = verify_paths;
            opt.seed = seed;
            const VerificationSummary sum = run_verification(real, spec.sigma_L, opt, thresholds);
            const std::string report = verification_to_json(sum).dump(2) + "\n";
            if (json_path.empty()) std::cout << report;
            else write_text(json_path, report);
            return sum.accepted ? kExitOk : kExitGate;
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

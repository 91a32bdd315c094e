#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ccgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

// Named error conditions. Each maps to one failure mode of the public
// operations; everything else that would be a programming error uses the
// standard exceptions directly.
struct SingularLeadingCoefficient : std::runtime_error {
    explicit SingularLeadingCoefficient(const std::string& msg) : std::runtime_error(msg) {}
};
struct SingularCq : std::runtime_error {
    explicit SingularCq(const std::string& msg) : std::runtime_error(msg) {}
};
struct DegreeError : std::runtime_error {
    explicit DegreeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NearSpectrum : std::runtime_error {
    explicit NearSpectrum(const std::string& msg) : std::runtime_error(msg) {}
};
struct UnstableA : std::runtime_error {
    explicit UnstableA(const std::string& msg) : std::runtime_error(msg) {}
};
struct NegativeHorizon : std::runtime_error {
    explicit NegativeHorizon(const std::string& msg) : std::runtime_error(msg) {}
};
struct IndexOutOfRange : std::out_of_range {
    explicit IndexOutOfRange(const std::string& msg) : std::out_of_range(msg) {}
};
struct SameVertex : std::invalid_argument {
    explicit SameVertex(const std::string& msg) : std::invalid_argument(msg) {}
};
struct NotValidated : std::runtime_error {
    explicit NotValidated(const std::string& msg) : std::runtime_error(msg) {}
};
struct InsufficientHorizon : std::runtime_error {
    explicit InsufficientHorizon(const std::string& msg) : std::runtime_error(msg) {}
};
struct FactorizationFailure : std::runtime_error {
    explicit FactorizationFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// Worker count for the embarrassingly parallel loops (simulation paths,
// pairwise edge decisions). CCGRAPH_THREADS caps it; results never depend
// on the value because every work item writes to its own slot.
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("CCGRAPH_THREADS")) {
        char* end = nullptr;
        long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0 && static_cast<unsigned long>(cap) < n) {
            n = static_cast<unsigned>(cap);
        }
    }
    return n;
}

// Runs fn(i) for i in [0, count). Work item i always lands in the same
// result slot, so output is schedule independent.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    unsigned workers = worker_count();
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    if (workers > count) workers = static_cast<unsigned>(count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace ccgraph

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dgmflow::lp {

enum class Sense { le, ge, eq };

struct Row {
    std::vector<std::pair<std::size_t, double>> terms;
    Sense sense = Sense::le;
    double rhs = 0.0;
};

// minimize objective·x subject to rows, x >= 0
struct Problem {
    std::size_t num_vars = 0;
    std::vector<double> objective;
    std::vector<Row> rows;
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Result {
    Status status = Status::iteration_limit;
    double value = 0.0;
    std::vector<double> x;
    std::size_t pivots = 0;
};

struct Options {
    double feasibility_tol = 1e-9;
    double optimality_tol = 1e-12;
    double pivot_tol = 1e-11;
    std::size_t max_pivots = 200000;
};

// Dense two-phase tableau simplex.
Result solve(const Problem& problem, const Options& options = {});

// Warm start for all-equality programs: basis[i] is the structural column basic in row i.
// Falls back to two phases when the basis is singular or infeasible.
Result solve(const Problem& problem, const std::vector<std::size_t>& basis, const Options& options = {});

}  // namespace dgmflow::lp

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dgmflow/metric.hpp"

namespace dgmflow {

// Finite positive measure: weighted atoms in ℝ^dim. A measure with no atoms is the zero measure.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;
    explicit DiscreteMeasure(std::size_t dim) : dim_(dim) {}
    DiscreteMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);

    static DiscreteMeasure dirac(std::vector<double> point, double mass = 1.0);

    void add(std::span<const double> point, double weight);
    void add(std::initializer_list<double> point, double weight) {
        add(std::span<const double>(point.begin(), point.size()), weight);
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return weights_.size(); }
    bool empty() const { return weights_.empty(); }
    std::span<const double> atom(std::size_t k) const { return {coords_.data() + k * dim_, dim_}; }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<double>& coords() const { return coords_; }
    const std::vector<double>& weights() const { return weights_; }
    double total_mass() const;

    DiscreteMeasure scaled(double c) const;

private:
    std::size_t dim_ = 0;
    std::vector<double> coords_;
    std::vector<double> weights_;
};

struct DistanceOptions {
    std::size_t max_atoms = 400;    // cap on distinct atoms handed to the LP
    double merge_tol = 1e-12;       // atoms closer than this are merged
};

// sup{∫f d(μ−ν) : ‖f‖∞ + Lip(f) ≤ 1}, solved exactly as a linear program.
double bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric = {},
                   const DistanceOptions& opt = {});

// Lipschitz-1 dual (equal masses required).
double kr_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric = {},
                   const DistanceOptions& opt = {});

// sup_A |μ(A) − ν(A)|.
double tv_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric = {},
                   double merge_tol = 1e-12);

// Text format: line `dim,count,mass`, then `w,c1,...,cd` per atom, 17 significant digits.
void write_measure(std::ostream& out, const DiscreteMeasure& mu);
DiscreteMeasure read_measure(std::istream& in);
void save_measure(const std::string& path, const DiscreteMeasure& mu);
DiscreteMeasure load_measure(const std::string& path);

// Comma-separated reals; errors name `what` and the line number.
std::vector<double> parse_real_row(const std::string& line, std::size_t lineno, const std::string& what);

// Shared formatting for every CSV the library writes.
std::string format_real(double v);

}  // namespace dgmflow

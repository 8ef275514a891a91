#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dgmflow {

// ℓ1 distance with an optional wrap-around period per coordinate (0 = not periodic).
class Metric {
public:
    Metric() = default;

    static Metric l1() { return Metric(); }
    static Metric circle(double period = 1.0) { return Metric({period}); }
    static Metric periodic(std::vector<double> periods) { return Metric(std::move(periods)); }

    double operator()(std::span<const double> a, std::span<const double> b) const {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += coord_distance(k, a[k], b[k]);
        return s;
    }

    double coord_distance(std::size_t k, double a, double b) const {
        double d = a > b ? a - b : b - a;
        const double p = period(k);
        if (p > 0.0) {
            d -= p * static_cast<long long>(d / p);
            if (p - d < d) d = p - d;
        }
        return d;
    }

    double period(std::size_t k) const { return k < periods_.size() ? periods_[k] : 0.0; }
    const std::vector<double>& periods() const { return periods_; }

    // Canonical representative of a coordinate (into [0, p) when periodic).
    double wrap(std::size_t k, double v) const;

    // ℓ1 sum of this metric on the first `first_dim` coordinates and `second` on the rest.
    Metric product(std::size_t first_dim, const Metric& second) const;

    bool operator==(const Metric&) const = default;

private:
    explicit Metric(std::vector<double> periods) : periods_(std::move(periods)) {
        while (!periods_.empty() && periods_.back() == 0.0) periods_.pop_back();
    }
    std::vector<double> periods_;
};

}  // namespace dgmflow

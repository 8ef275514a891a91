#include "dgmflow/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgmflow/error.hpp"

namespace dgmflow::lp {
namespace {

class Tableau {
public:
    Tableau(const Problem& p, const Options& opt, const std::vector<std::size_t>* warm = nullptr)
        : opt_(opt), n_struct_(p.num_vars) {
        if (p.objective.size() != p.num_vars) throw Error("lp: objective length differs from num_vars");
        m_ = p.rows.size();

        // column layout: structural | slack or surplus per inequality row | artificials
        std::vector<int> sign(m_, 1);
        std::size_t n_slack = 0, n_art = 0;
        for (std::size_t i = 0; i < m_; ++i) {
            const Row& row = p.rows[i];
            Sense s = row.sense;
            if (row.rhs < 0) {
                sign[i] = -1;
                if (s == Sense::le) s = Sense::ge;
                else if (s == Sense::ge) s = Sense::le;
            }
            if (s != Sense::eq) ++n_slack;
            if (s != Sense::le && !warm) ++n_art;
        }
        first_art_ = n_struct_ + n_slack;
        cols_ = first_art_ + n_art;
        a_.assign(m_ * cols_, 0.0);
        b_.assign(m_, 0.0);
        basis_.assign(m_, 0);
        active_.assign(m_, 1);
        cost2_.assign(cols_, 0.0);
        cost1_.assign(cols_, 0.0);

        std::size_t next_slack = n_struct_, next_art = first_art_;
        for (std::size_t i = 0; i < m_; ++i) {
            const Row& row = p.rows[i];
            double* r = &a_[i * cols_];
            for (auto [j, v] : row.terms) {
                if (j >= n_struct_) throw Error("lp: variable index out of range");
                r[j] += sign[i] * v;
            }
            b_[i] = sign[i] * row.rhs;
            Sense s = row.sense;
            if (sign[i] < 0) {
                if (s == Sense::le) s = Sense::ge;
                else if (s == Sense::ge) s = Sense::le;
            }
            if (warm) {
                basis_[i] = (*warm)[i];
            } else if (s == Sense::le) {
                r[next_slack] = 1.0;
                basis_[i] = next_slack++;
            } else {
                if (s == Sense::ge) r[next_slack++] = -1.0;
                r[next_art] = 1.0;
                basis_[i] = next_art++;
            }
        }

        for (std::size_t j = 0; j < n_struct_; ++j) cost2_[j] = p.objective[j];
        if (warm) return;
        // phase-one reduced costs: minimize the sum of artificials
        for (std::size_t i = 0; i < m_; ++i) {
            if (basis_[i] < first_art_) continue;
            const double* r = &a_[i * cols_];
            for (std::size_t j = 0; j < first_art_; ++j) cost1_[j] -= r[j];
            z1_ -= b_[i];
        }
    }

    Status run_phase(bool phase_one) {
        std::vector<double>& cost = phase_one ? cost1_ : cost2_;
        const std::size_t limit = phase_one ? cols_ : first_art_;
        std::size_t degenerate_run = 0;
        bool bland = false;
        while (true) {
            if (pivots_ >= opt_.max_pivots) return Status::iteration_limit;
            std::size_t enter = cols_;
            double best = -opt_.optimality_tol;
            for (std::size_t j = 0; j < limit; ++j) {
                if (cost[j] < best) {
                    enter = j;
                    if (bland) break;
                    best = cost[j];
                }
            }
            if (enter == cols_) return Status::optimal;

            std::size_t leave = m_;
            double ratio = std::numeric_limits<double>::infinity();
            double leave_coef = 0.0;
            for (std::size_t i = 0; i < m_; ++i) {
                if (!active_[i]) continue;
                const double coef = a_[i * cols_ + enter];
                if (coef <= opt_.pivot_tol) continue;
                const double q = std::max(b_[i], 0.0) / coef;
                bool take = false;
                if (q < ratio - 1e-14) take = true;
                else if (q <= ratio + 1e-14) {
                    take = bland ? basis_[i] < basis_[leave] : coef > leave_coef;
                }
                if (take) {
                    leave = i;
                    ratio = std::min(q, ratio);
                    leave_coef = coef;
                }
            }
            if (leave == m_) return Status::unbounded;

            if (ratio <= 1e-14) {
                if (++degenerate_run > 2 * m_ + 10) bland = true;
            } else {
                degenerate_run = 0;
                bland = false;
            }
            pivot(leave, enter);
        }
    }

    // After phase one: push remaining zero-valued artificials out of the basis.
    void evict_artificials() {
        for (std::size_t i = 0; i < m_; ++i) {
            if (!active_[i] || basis_[i] < first_art_) continue;
            const double* r = &a_[i * cols_];
            std::size_t best = cols_;
            double mag = 1e-9;
            for (std::size_t j = 0; j < first_art_; ++j) {
                if (std::abs(r[j]) > mag) {
                    mag = std::abs(r[j]);
                    best = j;
                }
            }
            if (best == cols_) {
                active_[i] = 0;  // redundant equality
            } else {
                b_[i] = 0.0;
                pivot(i, best);
            }
        }
    }

    double phase_one_value() const { return -z1_; }

    // Bring the supplied basis into canonical form; false if singular or infeasible.
    bool canonicalize() {
        for (std::size_t i = 0; i < m_; ++i) {
            const std::size_t j = basis_[i];
            if (j >= n_struct_ || std::abs(a_[i * cols_ + j]) < 1e-12) return false;
            pivot(i, j);
        }
        for (double v : b_)
            if (v < -opt_.feasibility_tol) return false;
        return true;
    }

    Result extract(const Problem& p) const {
        Result res;
        res.x.assign(n_struct_, 0.0);
        for (std::size_t i = 0; i < m_; ++i) {
            if (active_[i] && basis_[i] < n_struct_) res.x[basis_[i]] = std::max(b_[i], 0.0);
        }
        res.value = 0.0;
        for (std::size_t j = 0; j < n_struct_; ++j) res.value += p.objective[j] * res.x[j];
        res.pivots = pivots_;
        res.status = Status::optimal;
        return res;
    }

    std::size_t pivots() const { return pivots_; }

private:
    void pivot(std::size_t r, std::size_t e) {
        ++pivots_;
        double* pr = &a_[r * cols_];
        const double inv = 1.0 / pr[e];
        for (std::size_t j = 0; j < cols_; ++j) pr[j] *= inv;
        pr[e] = 1.0;
        b_[r] *= inv;
        const double br = b_[r];
        for (std::size_t i = 0; i < m_; ++i) {
            if (i == r) continue;
            double* pi = &a_[i * cols_];
            const double f = pi[e];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < cols_; ++j) pi[j] -= f * pr[j];
            pi[e] = 0.0;
            b_[i] -= f * br;
        }
        update_cost(cost1_, z1_, pr, br, e);
        update_cost(cost2_, z2_, pr, br, e);
        basis_[r] = e;
    }

    void update_cost(std::vector<double>& cost, double& z, const double* pr, double br, std::size_t e) {
        const double f = cost[e];
        if (f == 0.0) return;
        for (std::size_t j = 0; j < cols_; ++j) cost[j] -= f * pr[j];
        cost[e] = 0.0;
        z -= f * br;
    }

    Options opt_;
    std::size_t n_struct_, m_ = 0, cols_ = 0, first_art_ = 0;
    std::vector<double> a_, b_, cost1_, cost2_;
    double z1_ = 0.0, z2_ = 0.0;
    std::vector<std::size_t> basis_;
    std::vector<char> active_;
    std::size_t pivots_ = 0;
};

}  // namespace

Result solve(const Problem& problem, const std::vector<std::size_t>& basis, const Options& options) {
    bool usable = basis.size() == problem.rows.size();
    for (const Row& r : problem.rows) usable = usable && r.sense == Sense::eq;
    if (usable) {
        Tableau t(problem, options, &basis);
        if (t.canonicalize()) {
            const Status s = t.run_phase(false);
            if (s != Status::optimal) return Result{s, 0.0, {}, t.pivots()};
            return t.extract(problem);
        }
    }
    return solve(problem, options);
}

Result solve(const Problem& problem, const Options& options) {
    Tableau t(problem, options);
    Status s = t.run_phase(true);
    if (s == Status::iteration_limit) return Result{s, 0.0, {}, t.pivots()};
    if (t.phase_one_value() > options.feasibility_tol) return Result{Status::infeasible, 0.0, {}, t.pivots()};
    t.evict_artificials();
    s = t.run_phase(false);
    if (s != Status::optimal) return Result{s, 0.0, {}, t.pivots()};
    return t.extract(problem);
}

}  // namespace dgmflow::lp

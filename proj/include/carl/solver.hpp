#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carl/core.hpp"

namespace carl {

// ---------------------------------------------------------------------------
// Dense two-phase simplex for  max c^T x  s.t.  A x <= b,  x >= 0.
// ---------------------------------------------------------------------------

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpResult {
    LpStatus status = LpStatus::iteration_limit;
    Eigen::VectorXd x;
    double objective = 0.0;
    int pivots = 0;
};

class SimplexTableau {
public:
    SimplexTableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol) : tol_(tol) {
        m_ = A.rows();
        n_ = A.cols();
        std::vector<Eigen::Index> neg;
        for (Eigen::Index i = 0; i < m_; ++i)
            if (b(i) < 0) neg.push_back(i);
        n_art_ = static_cast<Eigen::Index>(neg.size());
        cols_ = n_ + m_ + n_art_;
        T_ = Eigen::MatrixXd::Zero(m_ + 1, cols_ + 1);
        basis_.resize(m_);
        Eigen::Index art = 0;
        for (Eigen::Index i = 0; i < m_; ++i) {
            double sign = b(i) < 0 ? -1.0 : 1.0;
            T_.row(i).head(n_) = sign * A.row(i);
            T_(i, n_ + i) = sign;
            T_(i, cols_) = sign * b(i);
            if (sign < 0) {
                T_(i, n_ + m_ + art) = 1.0;
                basis_[i] = n_ + m_ + art;
                ++art;
            } else {
                basis_[i] = n_ + i;
            }
        }
    }

    /// Runs both phases. `c` has length n (structural variables only).
    LpResult solve(const Eigen::VectorXd& c, int max_pivots) {
        LpResult res;
        if (n_art_ > 0) {
            Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(cols_);
            phase1.tail(n_art_).setConstant(-1.0);
            set_objective(phase1);
            auto st = iterate(cols_, max_pivots, res.pivots);
            if (st != LpStatus::optimal) {
                res.status = st;
                return res;
            }
            if (T_(m_, cols_) < -tol_ * std::max(1.0, T_.col(cols_).head(m_).cwiseAbs().maxCoeff())) {
                res.status = LpStatus::infeasible;
                return res;
            }
            drive_out_artificials();
        }
        Eigen::VectorXd full = Eigen::VectorXd::Zero(cols_);
        full.head(n_) = c;
        set_objective(full);
        res.status = iterate(n_ + m_, max_pivots, res.pivots);
        res.x = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < m_; ++i)
            if (basis_[i] < n_) res.x(basis_[i]) = std::max(0.0, T_(i, cols_));
        res.objective = c.dot(res.x);
        return res;
    }

private:
    // Objective row stores reduced costs r_j = c_B B^-1 a_j - c_j; optimal when all r_j >= 0.
    void set_objective(const Eigen::VectorXd& c) {
        T_.row(m_).setZero();
        T_.row(m_).head(cols_) = -c.transpose();
        for (Eigen::Index i = 0; i < m_; ++i) {
            double cb = c(basis_[i]);
            if (cb != 0.0) T_.row(m_) += cb * T_.row(i);
        }
    }

    void pivot(Eigen::Index row, Eigen::Index col) {
        T_.row(row) /= T_(row, col);
        for (Eigen::Index i = 0; i <= m_; ++i) {
            if (i == row) continue;
            double f = T_(i, col);
            if (f != 0.0) T_.row(i) -= f * T_.row(row);
        }
        basis_[row] = col;
    }

    LpStatus iterate(Eigen::Index usable_cols, int max_pivots, int& pivots) {
        int degenerate_run = 0;
        while (pivots < max_pivots) {
            bool bland = degenerate_run > 50;
            Eigen::Index enter = -1;
            double best = -tol_;
            for (Eigen::Index j = 0; j < usable_cols; ++j) {
                double r = T_(m_, j);
                if (r < best) {
                    enter = j;
                    if (bland) break;
                    best = r;
                }
            }
            if (enter < 0) return LpStatus::optimal;
            Eigen::Index leave = -1;
            double ratio = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < m_; ++i) {
                double a = T_(i, enter);
                if (a > tol_) {
                    double q = T_(i, cols_) / a;
                    if (q < ratio - 1e-12 || (q <= ratio + 1e-12 && leave >= 0 && basis_[i] < basis_[leave])) {
                        ratio = q;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return LpStatus::unbounded;
            degenerate_run = ratio <= tol_ ? degenerate_run + 1 : 0;
            pivot(leave, enter);
            ++pivots;
        }
        return LpStatus::iteration_limit;
    }

    void drive_out_artificials() {
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (basis_[i] < n_ + m_) continue;
            for (Eigen::Index j = 0; j < n_ + m_; ++j)
                if (std::abs(T_(i, j)) > tol_) {
                    pivot(i, j);
                    break;
                }
        }
        // Artificial columns are never re-entered: iterate() only scans the first n+m columns.
    }

    double tol_;
    Eigen::Index m_ = 0, n_ = 0, n_art_ = 0, cols_ = 0;
    Eigen::MatrixXd T_;
    std::vector<Eigen::Index> basis_;
};

inline LpResult solve_lp_simplex(const Eigen::VectorXd& c, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                 double tol = 1e-10, int max_pivots = 200000) {
    if (A.cols() != c.size() || A.rows() != b.size()) throw DimensionError("LP shapes disagree");
    SimplexTableau t(A, b, tol);
    return t.solve(c, max_pivots);
}

// ---------------------------------------------------------------------------
// Log-barrier interior method for  max c^T x  s.t.  g_i(x) <= 0 (convex, smooth),  A x <= b.
// ---------------------------------------------------------------------------

/// A smooth convex constraint g(x) <= 0 that depends on the variables listed in `support`.
struct SmoothConstraint {
    std::vector<int> support;
    /// Fills value and, if `derivs` is set, gradient and Hessian in support coordinates.
    /// Returns false when the point lies outside the function's domain.
    std::function<bool(const Eigen::VectorXd& local, bool derivs, double& value, Eigen::VectorXd& grad,
                       Eigen::MatrixXd& hess)>
        eval;
};

struct ConvexProgram {
    int num_vars = 0;
    Eigen::VectorXd objective;  ///< maximize objective . x
    Eigen::MatrixXd A;          ///< linear rows A x <= b (may have zero rows)
    Eigen::VectorXd b;
    std::vector<SmoothConstraint> constraints;
};

struct BarrierOptions {
    double t0 = 1.0;
    double mu = 20.0;
    double gap_tol = 1e-8;
    double newton_tol = 1e-9;
    int max_newton_per_center = 200;
    int max_outer = 60;
};

struct KktReport {
    double stationarity = 0.0;           ///< ||c - sum(lambda * grad g) - A^T mu||_inf
    double primal_infeasibility = 0.0;   ///< max(0, max constraint value)
    double complementarity = 0.0;        ///< max |lambda_i g_i|
    double dual_infeasibility = 0.0;     ///< max(0, -min multiplier)

    double max_residual() const {
        return std::max({stationarity, primal_infeasibility, complementarity, dual_infeasibility});
    }
};

enum class ConvexStatus { optimal, newton_stalled };

struct ConvexSolution {
    ConvexStatus status = ConvexStatus::optimal;
    Eigen::VectorXd x;
    Eigen::VectorXd smooth_multipliers;
    Eigen::VectorXd linear_multipliers;
    double objective = 0.0;
    double gap = 0.0;
    int newton_steps = 0;
    KktReport kkt;
};

namespace detail {

class BarrierEngine {
public:
    BarrierEngine(const ConvexProgram& p, const BarrierOptions& o) : p_(p), o_(o) {
        if (p.objective.size() != p.num_vars) throw DimensionError("objective length must equal num_vars");
        if (p.A.rows() > 0 && p.A.cols() != p.num_vars) throw DimensionError("A must have num_vars columns");
        if (p.A.rows() != p.b.size()) throw DimensionError("A and b disagree");
        m_total_ = static_cast<double>(p.constraints.size() + p.A.rows());
    }

    /// Strict feasibility of x, including all domains.
    bool strictly_feasible(const Eigen::VectorXd& x) const {
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        for (const auto& c : p_.constraints) {
            if (!c.eval(gather(x, c.support), false, v, gr, h) || !(v < 0.0)) return false;
        }
        if (p_.A.rows() > 0 && !((p_.b - p_.A * x).array() > 0.0).all()) return false;
        return true;
    }

    /// Largest constraint value; +inf when outside a domain.
    double max_violation(const Eigen::VectorXd& x) const {
        double worst = -std::numeric_limits<double>::infinity();
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        for (const auto& c : p_.constraints) {
            if (!c.eval(gather(x, c.support), false, v, gr, h)) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, v);
        }
        if (p_.A.rows() > 0) worst = std::max(worst, (p_.A * x - p_.b).maxCoeff());
        return worst;
    }

    /// Barrier path from a strictly feasible x. `early_stop` may end the run after any Newton step.
    ConvexSolution run(Eigen::VectorXd x, const std::function<bool(const Eigen::VectorXd&)>& early_stop = {}) {
        if (!strictly_feasible(x)) throw SolverError("barrier start is not strictly feasible");
        ConvexSolution sol;
        double t = o_.t0;
        if (m_total_ == 0) throw SolverError("barrier problem has no constraints");
        for (int outer = 0; outer < o_.max_outer; ++outer) {
            bool stalled = !center(x, t, sol.newton_steps, early_stop);
            if (early_stop && early_stop(x)) break;
            if (stalled) {
                sol.status = ConvexStatus::newton_stalled;
                break;
            }
            if (m_total_ / t < o_.gap_tol) break;
            t *= o_.mu;
        }
        finish(x, t, sol);
        return sol;
    }

private:
    static Eigen::VectorXd gather(const Eigen::VectorXd& x, const std::vector<int>& idx) {
        Eigen::VectorXd out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = x(idx[i]);
        return out;
    }

    /// Barrier merit t*(-c.x) - sum log(-g) - sum log(b - Ax); +inf outside.
    double merit(const Eigen::VectorXd& x, double t) const {
        double f = -t * p_.objective.dot(x);
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        for (const auto& c : p_.constraints) {
            if (!c.eval(gather(x, c.support), false, v, gr, h) || !(v < 0.0))
                return std::numeric_limits<double>::infinity();
            f -= std::log(-v);
        }
        if (p_.A.rows() > 0) {
            Eigen::VectorXd r = p_.b - p_.A * x;
            for (Eigen::Index i = 0; i < r.size(); ++i) {
                if (!(r(i) > 0.0)) return std::numeric_limits<double>::infinity();
                f -= std::log(r(i));
            }
        }
        return f;
    }

    void derivatives(const Eigen::VectorXd& x, double t, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        const int n = p_.num_vars;
        grad = -t * p_.objective;
        hess = Eigen::MatrixXd::Zero(n, n);
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        for (const auto& c : p_.constraints) {
            c.eval(gather(x, c.support), true, v, gr, h);
            double inv = -1.0 / v;
            const auto& s = c.support;
            for (std::size_t a = 0; a < s.size(); ++a) {
                grad(s[a]) += inv * gr(a);
                for (std::size_t b = 0; b < s.size(); ++b)
                    hess(s[a], s[b]) += inv * inv * gr(a) * gr(b) + inv * h(a, b);
            }
        }
        if (p_.A.rows() > 0) {
            Eigen::VectorXd r = (p_.b - p_.A * x).cwiseInverse();
            grad += p_.A.transpose() * r;
            hess += p_.A.transpose() * r.cwiseAbs2().asDiagonal() * p_.A;
        }
    }

    /// Newton centering; returns false if the line search stalls before convergence.
    bool center(Eigen::VectorXd& x, double t, int& steps,
                const std::function<bool(const Eigen::VectorXd&)>& early_stop) const {
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
        for (int it = 0; it < o_.max_newton_per_center; ++it) {
            derivatives(x, t, grad, hess);
            Eigen::VectorXd dx;
            double ridge = 0.0;
            for (int tries = 0; tries < 12; ++tries) {
                Eigen::LLT<Eigen::MatrixXd> llt(hess + ridge * Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
                if (llt.info() == Eigen::Success) {
                    dx = -llt.solve(grad);
                    if (dx.allFinite()) break;
                }
                ridge = ridge == 0.0 ? 1e-12 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff()) : ridge * 100.0;
                dx.resize(0);
            }
            if (dx.size() == 0) return false;
            double decrement = -grad.dot(dx);
            double f0 = merit(x, t);
            // Below this level the merit cannot resolve further decrease.
            double noise = 1e-13 * std::max(1.0, std::abs(f0));
            if (decrement / 2.0 <= std::max(o_.newton_tol, noise)) return true;
            double step = 1.0;
            bool moved = false;
            while (step > 1e-14) {
                Eigen::VectorXd cand = x + step * dx;
                double f1 = merit(cand, t);
                if (f1 <= f0 - 0.01 * step * decrement + noise) {
                    x = std::move(cand);
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            ++steps;
            if (!moved) return decrement < 1e-6;
            if (early_stop && early_stop(x)) return true;
        }
        return true;
    }

    void finish(const Eigen::VectorXd& x, double t, ConvexSolution& sol) const {
        sol.x = x;
        sol.objective = p_.objective.dot(x);
        sol.gap = m_total_ / t;
        Eigen::VectorXd station = p_.objective;
        sol.smooth_multipliers.resize(static_cast<Eigen::Index>(p_.constraints.size()));
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        KktReport k;
        for (std::size_t i = 0; i < p_.constraints.size(); ++i) {
            const auto& c = p_.constraints[i];
            c.eval(gather(x, c.support), true, v, gr, h);
            double lam = -1.0 / (t * v);
            sol.smooth_multipliers(static_cast<Eigen::Index>(i)) = lam;
            for (std::size_t a = 0; a < c.support.size(); ++a) station(c.support[a]) -= lam * gr(a);
            k.primal_infeasibility = std::max(k.primal_infeasibility, v);
            k.complementarity = std::max(k.complementarity, std::abs(lam * v));
            k.dual_infeasibility = std::max(k.dual_infeasibility, -lam);
        }
        if (p_.A.rows() > 0) {
            Eigen::VectorXd r = p_.b - p_.A * x;
            sol.linear_multipliers = (t * r).cwiseInverse();
            station -= p_.A.transpose() * sol.linear_multipliers;
            k.primal_infeasibility = std::max(k.primal_infeasibility, (-r).maxCoeff());
            k.complementarity = std::max(k.complementarity, (sol.linear_multipliers.cwiseProduct(r)).cwiseAbs().maxCoeff());
            k.dual_infeasibility = std::max(k.dual_infeasibility, -sol.linear_multipliers.minCoeff());
        }
        k.stationarity = station.cwiseAbs().maxCoeff();
        if (k.stationarity > 1e-9) refit_multipliers(x, sol, k);
        sol.kkt = k;
    }

    /// At large t the barrier multipliers inherit the centering error. Refit them by least squares
    /// over the nearly active constraints and keep the refit when it certifies stationarity better.
    void refit_multipliers(const Eigen::VectorXd& x, ConvexSolution& sol, KktReport& k) const {
        const auto n = static_cast<Eigen::Index>(p_.num_vars);
        const double scale = 1.0 + x.cwiseAbs().maxCoeff();
        std::vector<Eigen::VectorXd> cols;
        std::vector<std::pair<int, Eigen::Index>> ids;  // (0 smooth | 1 linear, index)
        std::vector<double> slack;
        double v;
        Eigen::VectorXd gr;
        Eigen::MatrixXd h;
        for (std::size_t i = 0; i < p_.constraints.size(); ++i) {
            const auto& c = p_.constraints[i];
            c.eval(gather(x, c.support), true, v, gr, h);
            double tol = 1e-6 * std::max(1.0, gr.cwiseAbs().maxCoeff() * scale);
            if (-v > tol) continue;
            Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
            for (std::size_t a = 0; a < c.support.size(); ++a) col(c.support[a]) = gr(a);
            cols.push_back(std::move(col));
            ids.emplace_back(0, static_cast<Eigen::Index>(i));
            slack.push_back(-v);
        }
        for (Eigen::Index r = 0; r < p_.A.rows(); ++r) {
            double sl = p_.b(r) - p_.A.row(r).dot(x);
            double tol = 1e-6 * std::max(1.0, p_.A.row(r).cwiseAbs().maxCoeff() * scale);
            if (sl > tol) continue;
            cols.push_back(p_.A.row(r).transpose());
            ids.emplace_back(1, r);
            slack.push_back(sl);
        }
        if (cols.empty()) return;
        Eigen::MatrixXd J(n, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) J.col(static_cast<Eigen::Index>(j)) = cols[j];
        Eigen::VectorXd lam = J.colPivHouseholderQr().solve(p_.objective);
        lam = lam.cwiseMax(0.0);
        Eigen::VectorXd station = p_.objective - J * lam;
        double st = station.cwiseAbs().maxCoeff();
        if (!(st < k.stationarity)) return;
        k.stationarity = st;
        k.complementarity = 0.0;
        k.dual_infeasibility = 0.0;
        sol.smooth_multipliers.setZero();
        if (p_.A.rows() > 0) sol.linear_multipliers.setZero();
        for (std::size_t j = 0; j < ids.size(); ++j) {
            auto [kind, idx] = ids[j];
            double l = lam(static_cast<Eigen::Index>(j));
            if (kind == 0) sol.smooth_multipliers(idx) = l;
            else sol.linear_multipliers(idx) = l;
            k.complementarity = std::max(k.complementarity, std::abs(l * slack[j]));
        }
    }

    const ConvexProgram& p_;
    BarrierOptions o_;
    double m_total_ = 0.0;
};

/// Phase I: find a strictly feasible point by minimizing a shared slack s with g_i(x) <= s.
inline Eigen::VectorXd phase_one(const ConvexProgram& p, const Eigen::VectorXd& x0, const BarrierOptions& opt) {
    BarrierEngine probe(p, opt);
    double s0 = probe.max_violation(x0);
    if (!std::isfinite(s0)) throw InfeasibleError("Phase I start lies outside a constraint domain");
    const int n = p.num_vars;
    ConvexProgram q;
    q.num_vars = n + 1;
    q.objective = Eigen::VectorXd::Zero(n + 1);
    q.objective(n) = -1.0;
    if (p.A.rows() > 0) {
        q.A = Eigen::MatrixXd::Zero(p.A.rows(), n + 1);
        q.A.leftCols(n) = p.A;
        q.A.col(n).setConstant(-1.0);
        q.b = p.b;
    } else {
        q.A.resize(0, n + 1);
        q.b.resize(0);
    }
    for (const auto& c : p.constraints) {
        SmoothConstraint r;
        r.support = c.support;
        r.support.push_back(n);
        auto inner = c.eval;
        r.eval = [inner](const Eigen::VectorXd& loc, bool derivs, double& v, Eigen::VectorXd& g,
                         Eigen::MatrixXd& h) {
            const Eigen::Index k = loc.size() - 1;
            Eigen::VectorXd gi;
            Eigen::MatrixXd hi;
            if (!inner(loc.head(k), derivs, v, gi, hi)) return false;
            v -= loc(k);
            if (derivs) {
                g.resize(k + 1);
                g.head(k) = gi;
                g(k) = -1.0;
                h = Eigen::MatrixXd::Zero(k + 1, k + 1);
                h.topLeftCorner(k, k) = hi;
            }
            return true;
        };
        q.constraints.push_back(std::move(r));
    }
    // A floor on s and a wide box around x0 keep the auxiliary problem bounded.
    double floor_s = -1.0 - std::abs(s0);
    const double radius = 1e3 * (1.0 + x0.cwiseAbs().maxCoeff());
    const Eigen::Index base = q.A.rows();
    Eigen::MatrixXd A2 = Eigen::MatrixXd::Zero(base + 1 + 2 * n, n + 1);
    Eigen::VectorXd b2(base + 1 + 2 * n);
    A2.topRows(base) = q.A;
    b2.head(base) = q.b;
    A2(base, n) = -1.0;
    b2(base) = -floor_s;
    for (int i = 0; i < n; ++i) {
        A2(base + 1 + 2 * i, i) = 1.0;
        b2(base + 1 + 2 * i) = x0(i) + radius;
        A2(base + 2 + 2 * i, i) = -1.0;
        b2(base + 2 + 2 * i) = -x0(i) + radius;
    }
    q.A = A2;
    q.b = b2;

    Eigen::VectorXd z(n + 1);
    z.head(n) = x0;
    z(n) = s0 + std::max(1.0, std::abs(s0));
    BarrierEngine eng(q, opt);
    double margin = 1e-9 * std::max(1.0, std::abs(s0));
    auto done = [&](const Eigen::VectorXd& v) { return v(n) < -margin && probe.strictly_feasible(v.head(n)); };
    auto sol = eng.run(z, done);
    if (!done(sol.x)) throw InfeasibleError("no strictly feasible point (Phase I optimum " + std::to_string(sol.x(n)) + ")");
    return sol.x.head(n);
}

}  // namespace detail

/// Solves the program from x0; runs Phase I first when x0 is not strictly feasible.
inline ConvexSolution solve_convex(const ConvexProgram& p, const Eigen::VectorXd& x0, const BarrierOptions& opt = {}) {
    if (x0.size() != p.num_vars) throw DimensionError("start point length must equal num_vars");
    detail::BarrierEngine eng(p, opt);
    Eigen::VectorXd start = eng.strictly_feasible(x0) ? x0 : detail::phase_one(p, x0, opt);
    return eng.run(start);
}

/// Maximizes a concave function f over A x <= b through the epigraph variable.
/// `f` fills value, gradient and Hessian and returns false outside its domain.
inline ConvexSolution maximize_concave(
    int n, const std::function<bool(const Eigen::VectorXd&, double&, Eigen::VectorXd&, Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x0, const BarrierOptions& opt = {}) {
    ConvexProgram p;
    p.num_vars = n + 1;
    p.objective = Eigen::VectorXd::Zero(n + 1);
    p.objective(n) = 1.0;
    p.A = Eigen::MatrixXd::Zero(A.rows(), n + 1);
    p.A.leftCols(n) = A;
    p.b = b;
    SmoothConstraint epi;
    for (int i = 0; i <= n; ++i) epi.support.push_back(i);
    epi.eval = [f, n](const Eigen::VectorXd& z, bool derivs, double& v, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
        double fv;
        Eigen::VectorXd fg;
        Eigen::MatrixXd fh;
        if (!f(z.head(n), fv, fg, fh)) return false;
        v = z(n) - fv;
        if (derivs) {
            g.resize(n + 1);
            g.head(n) = -fg;
            g(n) = 1.0;
            h = Eigen::MatrixXd::Zero(n + 1, n + 1);
            h.topLeftCorner(n, n) = -fh;
        }
        return true;
    };
    p.constraints.push_back(std::move(epi));
    Eigen::VectorXd z0(n + 1);
    z0.head(n) = x0;
    double fv = 0.0;
    Eigen::VectorXd fg;
    Eigen::MatrixXd fh;
    z0(n) = f(x0, fv, fg, fh) ? fv - 1.0 - std::abs(fv) : 0.0;
    auto sol = solve_convex(p, z0, opt);
    sol.x.conservativeResize(n);
    return sol;
}

}  // namespace carl

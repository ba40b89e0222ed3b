#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <tuple>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carl/baselines.hpp"
#include "carl/channel.hpp"
#include "carl/core.hpp"
#include "carl/energy.hpp"
#include "carl/rate.hpp"
#include "carl/scenario.hpp"
#include "carl/solver.hpp"
#include "carl/surrogates.hpp"

namespace carl {

struct OfflineOptions {
    double eps_outer = 1e-4;
    double inner_tol = 1e-4;
    int inner_max = 30;
    int outer_max = 40;
    bool optimize_trajectory = true;
    bool optimize_power = true;
    bool optimize_association = true;
    double position_scale = 100.0;  ///< meters per trajectory variable unit
    BarrierOptions barrier{};
};

/// Worst accumulated rate (bits/s summed over slots) under average gains.
inline double average_objective(const Plan& p, const Scenario& s) {
    return evaluate_plan(p, average_gains(p.waypoints, s), s).worst;
}

inline bool uav_serves(const Grid3<std::uint8_t>& a, std::size_t m, std::size_t n) {
    for (std::size_t k = 0; k < a.dim1(); ++k)
        if (a(m, k, n)) return true;
    return false;
}

inline bool node_served(const Grid3<std::uint8_t>& a, std::size_t k, std::size_t n) {
    for (std::size_t m = 0; m < a.dim0(); ++m)
        if (a(m, k, n)) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Association
// ---------------------------------------------------------------------------

struct AssociationResult {
    Grid3<std::uint8_t> association;
    Grid3<double> relaxed;
    double relaxed_min = 0.0;  ///< optimal max-min value of the relaxation, in log2 units
};

/// Rounds a relaxed association at 0.5, then keeps at most one node per UAV and one UAV per node
/// in every slot: the larger relaxed value wins, ties go to the lower index.
inline Grid3<std::uint8_t> round_association(const Grid3<double>& x) {
    const auto M = x.dim0(), K = x.dim1(), N = x.dim2();
    Grid3<std::uint8_t> a(M, K, N, 0);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < K; ++k) a(m, k, n) = x(m, k, n) >= 0.5 ? 1 : 0;
        for (std::size_t k = 0; k < K; ++k) {
            std::size_t keep = M;
            for (std::size_t m = 0; m < M; ++m)
                if (a(m, k, n) && (keep == M || x(m, k, n) > x(keep, k, n))) keep = m;
            for (std::size_t m = 0; m < M; ++m)
                if (m != keep) a(m, k, n) = 0;
        }
        for (std::size_t m = 0; m < M; ++m) {
            std::size_t keep = K;
            for (std::size_t k = 0; k < K; ++k)
                if (a(m, k, n) && (keep == K || x(m, k, n) > x(m, keep, n))) keep = k;
            for (std::size_t k = 0; k < K; ++k)
                if (k != keep) a(m, k, n) = 0;
        }
    }
    return a;
}

/// Max-min association for fixed gains and powers. `rate_coef` (M x K x N) holds log2(1 + SINR) of each
/// candidate pair and `eligible` (M x N) marks slots where the UAV may serve. The relaxation is solved
/// lexicographically: first the max-min value, then the total rate at that value.
inline AssociationResult solve_association_lp(const Grid3<double>& rate_coef, const Grid2<std::uint8_t>& eligible) {
    const auto M = rate_coef.dim0(), K = rate_coef.dim1(), N = rate_coef.dim2();
    std::vector<std::array<std::size_t, 3>> vars;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t n = 0; n < N; ++n)
                if (eligible(m, n) && rate_coef(m, k, n) > 0.0) vars.push_back({m, k, n});
    AssociationResult res{Grid3<std::uint8_t>(M, K, N, 0), Grid3<double>(M, K, N, 0.0), 0.0};
    if (vars.empty()) return res;
    const auto V = static_cast<Eigen::Index>(vars.size());

    // Rows: K epigraph rows, M*N "one node per UAV", K*N "one UAV per node".
    const auto R = static_cast<Eigen::Index>(K + M * N + K * N);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(R, V + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(R);
    for (Eigen::Index v = 0; v < V; ++v) {
        auto [m, k, n] = vars[static_cast<std::size_t>(v)];
        A(static_cast<Eigen::Index>(k), v) = -rate_coef(m, k, n);
        A(static_cast<Eigen::Index>(K + m * N + n), v) = 1.0;
        A(static_cast<Eigen::Index>(K + M * N + k * N + n), v) = 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) A(static_cast<Eigen::Index>(k), V) = 1.0;
    b.tail(R - static_cast<Eigen::Index>(K)).setOnes();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(V + 1);
    c(V) = 1.0;
    auto first = solve_lp_simplex(c, A, b);
    if (first.status != LpStatus::optimal) throw SolverError("association relaxation did not reach optimality");
    res.relaxed_min = first.objective;

    // Second stage: keep every node at or above the optimum, maximize the total.
    Eigen::MatrixXd A2 = A.leftCols(V);
    A2.topRows(static_cast<Eigen::Index>(K)) = A.topLeftCorner(static_cast<Eigen::Index>(K), V);
    Eigen::VectorXd b2 = b;
    double floor_v = first.objective * (1.0 - 1e-9) - 1e-12;
    b2.head(static_cast<Eigen::Index>(K)).setConstant(-floor_v);
    Eigen::VectorXd c2(V);
    for (Eigen::Index v = 0; v < V; ++v) {
        auto [m, k, n] = vars[static_cast<std::size_t>(v)];
        c2(v) = rate_coef(m, k, n);
    }
    auto second = solve_lp_simplex(c2, A2, b2);
    const Eigen::VectorXd& x = second.status == LpStatus::optimal ? second.x : Eigen::VectorXd(first.x.head(V));
    for (Eigen::Index v = 0; v < V; ++v) {
        auto [m, k, n] = vars[static_cast<std::size_t>(v)];
        res.relaxed(m, k, n) = std::clamp(x(v), 0.0, 1.0);
    }
    res.association = round_association(res.relaxed);
    return res;
}

/// Power used to score a pair the node does not yet transmit on: its mean harvested power.
inline std::vector<double> probe_powers(const HarvestProfile& profile, const Scenario& s) {
    std::vector<double> out(s.num_nodes(), 0.0);
    for (std::size_t k = 0; k < s.num_nodes(); ++k) {
        double e = 0.0;
        for (std::size_t n = 0; n < s.slots(); ++n) e += profile.energy(k, n);
        out[k] = e / s.horizon_seconds;
    }
    return out;
}

/// Association step of the alternating loop at fixed waypoints and powers.
/// Only slots in which a UAV hovers are eligible, so the result keeps the plan's hover coupling.
inline AssociationResult association_step(const Plan& p, const HarvestProfile& profile, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    auto gains = average_gains(p.waypoints, s);
    auto probe = probe_powers(profile, s);
    Grid3<double> coef(M, K, N, 0.0);
    Grid2<std::uint8_t> eligible(M, N, 0);
    std::vector<double> pw(K), g(K);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) pw[k] = p.power(k, n);
        for (std::size_t m = 0; m < M; ++m) {
            eligible(m, n) = hovers(p.waypoints, m, n, 1e-6);
            for (std::size_t k = 0; k < K; ++k) g[k] = gains(m, k, n);
            // A node this UAV serves now would go silent if the UAV switched to another node.
            std::vector<double> trial = pw;
            for (std::size_t i = 0; i < K; ++i)
                if (p.association(m, i, n)) trial[i] = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                double saved = trial[k];
                trial[k] = pw[k] > 0.0 ? pw[k] : probe[k];
                coef(m, k, n) = log2_1p(sinr(trial, g, k, s.noise_power));
                trial[k] = saved;
            }
        }
    }
    return solve_association_lp(coef, eligible);
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

struct InnerTrace {
    std::string kind;
    int round = 0;
    std::vector<double> values;
    bool rejected_step = false;  ///< the last restriction solution lowered the true objective and was discarded
};

/// Hover groups: indices 0..N of one UAV joined whenever the UAV serves in slot n.
struct HoverGroups {
    std::vector<int> group_of;    ///< per index
    std::vector<int> first;       ///< per group: first index
    std::vector<bool> fixed;      ///< per group: contains index 0 or N
    int count = 0;
};

inline HoverGroups hover_groups(const Grid3<std::uint8_t>& a, std::size_t m, std::size_t N) {
    HoverGroups h;
    h.group_of.assign(N + 1, -1);
    for (std::size_t n = 0; n <= N; ++n) {
        if (n > 0 && uav_serves(a, m, n - 1)) {
            h.group_of[n] = h.group_of[n - 1];
            continue;
        }
        h.group_of[n] = h.count++;
        h.first.push_back(static_cast<int>(n));
        h.fixed.push_back(n == 0);
    }
    h.fixed[static_cast<std::size_t>(h.group_of[N])] = true;
    return h;
}

/// Copies each hover group's first point across the group; groups touching an endpoint snap to the start.
inline Grid2<Vec2> project_hover(const Grid2<Vec2>& w, const Grid3<std::uint8_t>& a, const Scenario& s) {
    Grid2<Vec2> out = w;
    for (std::size_t m = 0; m < s.num_uavs(); ++m) {
        auto h = hover_groups(a, m, s.slots());
        for (std::size_t n = 0; n <= s.slots(); ++n) {
            auto g = static_cast<std::size_t>(h.group_of[n]);
            out(m, n) = h.fixed[g] ? s.uav_initials[m] : w(m, static_cast<std::size_t>(h.first[g]));
        }
    }
    return out;
}

namespace detail {

/// Rate of one served (UAV, node, slot) as a concave function of that UAV's position.
struct RateTermQ {
    std::size_t m = 0, n = 0;
    int var = -1;  ///< first of two position variables, or -1 when the point is fixed
    R1Surrogate r1;
    R2Surrogate r2;
};

class TrajectoryRestriction {
public:
    TrajectoryRestriction(const Grid3<std::uint8_t>& a, const Grid2<double>& power, const Grid2<Vec2>& q_ref,
                          const Scenario& s, double scale)
        : s_(s), L_(scale), q_ref_(q_ref) {
        const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
        var_of_.assign(M, std::vector<int>(N + 1, -1));
        for (std::size_t m = 0; m < M; ++m) {
            auto h = hover_groups(a, m, N);
            std::vector<int> gvar(static_cast<std::size_t>(h.count), -1);
            for (int g = 0; g < h.count; ++g)
                if (!h.fixed[static_cast<std::size_t>(g)]) {
                    gvar[static_cast<std::size_t>(g)] = nv_;
                    nv_ += 2;
                }
            for (std::size_t n = 0; n <= N; ++n) var_of_[m][n] = gvar[static_cast<std::size_t>(h.group_of[n])];
        }
        zeta_ = nv_++;

        // Rate terms, grouped by served node.
        terms_.assign(K, {});
        std::vector<double> pw(K);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t k = 0; k < K; ++k) pw[k] = power(k, n);
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t k = 0; k < K; ++k) {
                    if (!a(m, k, n)) continue;
                    RateTermQ t;
                    t.m = m;
                    t.n = n;
                    t.var = var_of_[m][n];
                    t.r1 = build_r1_llb(q_ref(m, n), pw, s);
                    t.r2 = build_r2_lb(q_ref(m, n), pw, k, s);
                    terms_[k].push_back(std::move(t));
                }
        }
    }

    int num_vars() const { return nv_; }

    Vec2 position(const Eigen::VectorXd& x, std::size_t m, std::size_t n) const {
        int v = var_of_[m][n];
        if (v < 0) return s_.uav_initials[m];
        return {L_ * x(v), L_ * x(v + 1)};
    }

    Eigen::VectorXd start_point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nv_);
        for (std::size_t m = 0; m < var_of_.size(); ++m)
            for (std::size_t n = 0; n < var_of_[m].size(); ++n) {
                int v = var_of_[m][n];
                if (v >= 0) {
                    x(v) = q_ref_(m, n).x / L_;
                    x(v + 1) = q_ref_(m, n).y / L_;
                }
            }
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < terms_.size(); ++k) lo = std::min(lo, node_value(x, k));
        x(zeta_) = lo - std::max(1e-3, 1e-3 * std::abs(lo));
        return x;
    }

    double node_value(const Eigen::VectorXd& x, std::size_t k) const {
        double v = 0.0;
        for (const auto& t : terms_[k]) {
            Vec2 q = position(x, t.m, t.n);
            double r2 = 0.0;
            if (!t.r2.eval(q, r2)) return -std::numeric_limits<double>::infinity();
            v += t.r1.eval(q) + r2;
        }
        return v;
    }

    ConvexProgram program() const {
        ConvexProgram p;
        p.num_vars = nv_;
        p.objective = Eigen::VectorXd::Zero(nv_);
        p.objective(zeta_) = 1.0;
        std::vector<Eigen::VectorXd> rows;
        std::vector<double> rhs;
        add_epigraph(p);
        add_speed(p);
        add_separation(rows, rhs);
        add_interference_domain(p, rows, rhs);
        p.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), nv_);
        p.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            p.A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
            p.b(static_cast<Eigen::Index>(i)) = rhs[i];
        }
        return p;
    }

    Grid2<Vec2> waypoints(const Eigen::VectorXd& x) const {
        Grid2<Vec2> w(var_of_.size(), var_of_.empty() ? 0 : var_of_[0].size());
        for (std::size_t m = 0; m < w.rows(); ++m)
            for (std::size_t n = 0; n < w.cols(); ++n) w(m, n) = position(x, m, n);
        return w;
    }

private:
    void add_epigraph(ConvexProgram& p) const {
        for (std::size_t k = 0; k < terms_.size(); ++k) {
            SmoothConstraint c;
            std::vector<int> vars;
            for (const auto& t : terms_[k])
                if (t.var >= 0) vars.push_back(t.var);
            std::sort(vars.begin(), vars.end());
            vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
            for (int v : vars) {
                c.support.push_back(v);
                c.support.push_back(v + 1);
            }
            c.support.push_back(zeta_);
            std::vector<int> local(static_cast<std::size_t>(nv_), -1);
            for (std::size_t i = 0; i < c.support.size(); ++i) local[static_cast<std::size_t>(c.support[i])] = static_cast<int>(i);
            const auto* terms = &terms_[k];
            const auto* self = this;
            const double L = L_;
            const int nloc = static_cast<int>(c.support.size());
            std::vector<int> term_local;
            for (const auto& t : *terms) term_local.push_back(t.var >= 0 ? local[static_cast<std::size_t>(t.var)] : -1);
            c.eval = [terms, self, L, nloc, term_local](const Eigen::VectorXd& z, bool derivs, double& v,
                                                       Eigen::VectorXd& g, Eigen::MatrixXd& h) {
                v = z(nloc - 1);
                if (derivs) {
                    g = Eigen::VectorXd::Zero(nloc);
                    g(nloc - 1) = 1.0;
                    h = Eigen::MatrixXd::Zero(nloc, nloc);
                }
                Eigen::Vector2d g1, g2;
                Eigen::Matrix2d h1, h2;
                for (std::size_t i = 0; i < terms->size(); ++i) {
                    const auto& t = (*terms)[i];
                    int li = term_local[i];
                    Vec2 q = li >= 0 ? Vec2{L * z(li), L * z(li + 1)} : self->s_.uav_initials[t.m];
                    double r2 = 0.0;
                    if (li >= 0 && derivs) {
                        if (!t.r2.eval(q, r2, &g2, &h2)) return false;
                        double r1 = t.r1.eval(q, &g1, &h1);
                        v -= r1 + r2;
                        g.segment<2>(li) -= L * (g1 + g2);
                        h.block<2, 2>(li, li) -= L * L * (h1 + h2);
                    } else {
                        if (!t.r2.eval(q, r2)) return false;
                        v -= t.r1.eval(q) + r2;
                    }
                }
                return true;
            };
            p.constraints.push_back(std::move(c));
        }
    }

    void add_speed(ConvexProgram& p) const {
        const double lim2 = s_.step_limit() * s_.step_limit();
        const double L = L_;
        for (std::size_t m = 0; m < var_of_.size(); ++m) {
            for (std::size_t n = 0; n + 1 < var_of_[m].size(); ++n) {
                int a = var_of_[m][n], b = var_of_[m][n + 1];
                if (a == b) continue;
                SmoothConstraint c;
                if (a >= 0) {
                    c.support.push_back(a);
                    c.support.push_back(a + 1);
                }
                if (b >= 0) {
                    c.support.push_back(b);
                    c.support.push_back(b + 1);
                }
                Vec2 fa = s_.uav_initials[m], fb = s_.uav_initials[m];
                bool va = a >= 0, vb = b >= 0;
                c.eval = [=](const Eigen::VectorXd& z, bool derivs, double& v, Eigen::VectorXd& g,
                             Eigen::MatrixXd& h) {
                    int ib = va ? 2 : 0;
                    Vec2 pa = va ? Vec2{L * z(0), L * z(1)} : fa;
                    Vec2 pb = vb ? Vec2{L * z(ib), L * z(ib + 1)} : fb;
                    Vec2 d = pb - pa;
                    v = norm_sq(d) / lim2 - 1.0;
                    if (derivs) {
                        auto nloc = z.size();
                        g = Eigen::VectorXd::Zero(nloc);
                        h = Eigen::MatrixXd::Zero(nloc, nloc);
                        double f = 2.0 * L * L / lim2;
                        if (va) {
                            g(0) = -2.0 * L * d.x / lim2;
                            g(1) = -2.0 * L * d.y / lim2;
                            h(0, 0) = h(1, 1) = f;
                        }
                        if (vb) {
                            g(ib) = 2.0 * L * d.x / lim2;
                            g(ib + 1) = 2.0 * L * d.y / lim2;
                            h(ib, ib) = h(ib + 1, ib + 1) = f;
                        }
                        if (va && vb) h(0, 2) = h(2, 0) = h(1, 3) = h(3, 1) = -f;
                    }
                    return true;
                };
                p.constraints.push_back(std::move(c));
            }
        }
    }

    void add_separation(std::vector<Eigen::VectorXd>& rows, std::vector<double>& rhs) const {
        const auto M = var_of_.size();
        if (M < 2) return;
        const auto N = var_of_[0].size() - 1;
        const double d2 = s_.d_min * s_.d_min;
        for (std::size_t n = 1; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t j = m + 1; j < M; ++j) {
                    int vm = var_of_[m][n], vj = var_of_[j][n];
                    if (vm < 0 && vj < 0) continue;
                    Vec2 qm = q_ref_(m, n), qj = q_ref_(j, n);
                    Vec2 dr = qm - qj;
                    // d_min^2 - ||dr||^2 - 2 dr.(qm - qm_r) + 2 dr.(qj - qj_r) <= 0, scaled by 1/d_min^2.
                    Eigen::VectorXd row = Eigen::VectorXd::Zero(nv_);
                    double r = norm_sq(dr) - d2;
                    if (vm >= 0) {
                        row(vm) -= 2.0 * L_ * dr.x;
                        row(vm + 1) -= 2.0 * L_ * dr.y;
                    }
                    r -= 2.0 * dot(dr, qm);
                    if (vj >= 0) {
                        row(vj) += 2.0 * L_ * dr.x;
                        row(vj + 1) += 2.0 * L_ * dr.y;
                    }
                    r += 2.0 * dot(dr, qj);
                    if (vm < 0) r += 2.0 * dot(dr, s_.uav_initials[m]);
                    if (vj < 0) r -= 2.0 * dot(dr, s_.uav_initials[j]);
                    rows.push_back(row / d2);
                    rhs.push_back(r / d2);
                }
    }

    /// Keeps each linearized squared distance positive and each Y~ at least one.
    void add_interference_domain(ConvexProgram& p, std::vector<Eigen::VectorXd>& rows,
                                 std::vector<double>& rhs) const {
        const double h2 = s_.altitude * s_.altitude;
        const double L = L_;
        std::vector<std::pair<int, const Vec2*>> seen;
        for (const auto& per_node : terms_)
            for (const auto& t : per_node) {
                if (t.var < 0) continue;
                for (const auto& it : t.r2.terms) {
                    if (it.overhead) continue;
                    bool dup = false;
                    for (const auto& [v, node] : seen) dup = dup || (v == t.var && *node == it.node);
                    if (dup) continue;
                    seen.emplace_back(t.var, &it.node);
                    // u = u_r + d.(q - q_r) > 0  <=>  -d.q < u_r - d.q_r
                    Vec2 d = 2.0 * (it.q_ref - it.node);
                    Eigen::VectorXd row = Eigen::VectorXd::Zero(nv_);
                    row(t.var) = -L * d.x;
                    row(t.var + 1) = -L * d.y;
                    double scale = 1.0 / (it.u_r + h2);
                    rows.push_back(row * scale);
                    rhs.push_back((it.u_r - dot(d, it.q_ref)) * scale);

                    SmoothConstraint c;
                    c.support = {t.var, t.var + 1};
                    R2Surrogate::Term term = it;
                    double H = s_.altitude;
                    c.eval = [term, d, L, H](const Eigen::VectorXd& z, bool derivs, double& v, Eigen::VectorXd& g,
                                             Eigen::MatrixXd& hm) {
                        Vec2 q{L * z(0), L * z(1)};
                        double u = term.u_r + dot(d, q - term.q_ref);
                        if (!(u > 0.0)) return false;
                        double su = std::sqrt(u);
                        double th = kRadToDeg * std::atan(H / su);
                        v = 1.0 - term.alpha + term.beta * (th - term.theta_r);
                        if (derivs) {
                            double th1 = -kRadToDeg * H / (2.0 * su * (u + H * H));
                            double th2 = kRadToDeg * H * (3.0 * u + H * H) / (4.0 * u * su * (u + H * H) * (u + H * H));
                            Eigen::Vector2d dv(L * d.x, L * d.y);
                            g = term.beta * th1 * dv;
                            hm = term.beta * th2 * dv * dv.transpose();
                        }
                        return true;
                    };
                    p.constraints.push_back(std::move(c));
                }
            }
    }

    const Scenario& s_;
    double L_;
    Grid2<Vec2> q_ref_;
    std::vector<std::vector<int>> var_of_;
    std::vector<std::vector<RateTermQ>> terms_;
    int nv_ = 0;
    int zeta_ = 0;
};

}  // namespace detail

struct TrajectoryResult {
    Grid2<Vec2> waypoints;
    InnerTrace trace;
};

/// Successive convex restrictions in the waypoints with association and power fixed.
/// The objective trace is in bits/s (worst node, summed over slots).
inline TrajectoryResult solve_trajectory_sca(const Grid3<std::uint8_t>& a, const Grid2<double>& power,
                                             const Grid2<Vec2>& q_init, const Scenario& s,
                                             const OfflineOptions& opt = {}) {
    Plan cur;
    cur.association = a;
    cur.power = power;
    cur.waypoints = project_hover(q_init, a, s);
    for (std::size_t n = 1; n < s.slots(); ++n)
        for (std::size_t m = 0; m < s.num_uavs(); ++m)
            for (std::size_t j = m + 1; j < s.num_uavs(); ++j) {
                double gap = s.d_min - norm(cur.waypoints(m, n) - cur.waypoints(j, n));
                if (gap > 1e-6) throw InfeasibleError("reference waypoints violate the minimum separation");
            }
    TrajectoryResult out{cur.waypoints, {"trajectory", 0, {}, false}};
    double f = average_objective(cur, s);
    out.trace.values.push_back(f);
    for (int it = 0; it < opt.inner_max; ++it) {
        detail::TrajectoryRestriction r(a, power, cur.waypoints, s, opt.position_scale);
        auto prog = r.program();
        auto sol = solve_convex(prog, r.start_point(), opt.barrier);
        Plan cand = cur;
        cand.waypoints = r.waypoints(sol.x);
        double fc = average_objective(cand, s);
        if (fc < f) {
            out.trace.rejected_step = fc < f - 1e-9 * std::max(1.0, std::abs(f));
            break;
        }
        cur = std::move(cand);
        double gain = fc - f;
        f = fc;
        out.trace.values.push_back(f);
        if (gain <= opt.inner_tol * std::max(std::abs(f - gain), 1e-300)) break;
    }
    out.waypoints = cur.waypoints;
    return out;
}

// ---------------------------------------------------------------------------
// Power
// ---------------------------------------------------------------------------

namespace detail {

class PowerRestriction {
public:
    PowerRestriction(const Grid3<std::uint8_t>& a, const Grid3<double>& gains, const Grid2<double>& p_ref,
                     const HarvestProfile& profile, const Scenario& s)
        : s_(s), a_(a), gains_(gains) {
        const auto K = s.num_nodes(), N = s.slots();
        var_.assign(K, std::vector<int>(N, -1));
        double unit = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double harvested = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                harvested += profile.energy(k, n);
                if (node_served(a, k, n) && harvested > 0.0) {
                    var_[k][n] = nv_++;
                    slot_of_.push_back({k, n});
                }
            }
            unit += harvested;
        }
        unit_ = std::max(unit / (static_cast<double>(K) * s.horizon_seconds), 1e-12);
        zeta_ = nv_++;
        p_ref_ = Grid2<double>(K, N, 0.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t n = 0; n < N; ++n)
                if (var_[k][n] >= 0) p_ref_(k, n) = std::max(p_ref(k, n), 0.0);
        build_energy_rows(profile);
    }

    int num_vars() const { return nv_; }

    Grid2<double> powers(const Eigen::VectorXd& x) const {
        Grid2<double> p(s_.num_nodes(), s_.slots(), 0.0);
        for (const auto& [k, n] : slot_of_) p(k, n) = std::max(0.0, unit_ * x(var_[k][n]));
        return p;
    }

    Eigen::VectorXd start_point() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nv_);
        for (const auto& [k, n] : slot_of_) x(var_[k][n]) = p_ref_(k, n) / unit_;
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < s_.num_nodes(); ++k) lo = std::min(lo, surrogate_value(x, k));
        x(zeta_) = lo - std::max(1e-3, 1e-3 * std::abs(lo));
        return x;
    }

    ConvexProgram program() const {
        ConvexProgram p;
        p.num_vars = nv_;
        p.objective = Eigen::VectorXd::Zero(nv_);
        p.objective(zeta_) = 1.0;
        const auto R = static_cast<Eigen::Index>(rows_.size() + slot_of_.size());
        p.A = Eigen::MatrixXd::Zero(R, nv_);
        p.b = Eigen::VectorXd::Zero(R);
        Eigen::Index r = 0;
        for (std::size_t i = 0; i < rows_.size(); ++i, ++r) {
            p.A.row(r) = rows_[i].transpose();
            p.b(r) = rhs_[i];
        }
        for (const auto& [k, n] : slot_of_) {
            p.A(r, var_[k][n]) = -1.0;
            ++r;
        }
        for (std::size_t k = 0; k < s_.num_nodes(); ++k) p.constraints.push_back(epigraph(k));
        return p;
    }

    /// Surrogate sum-rate of node k, in log2 units.
    double surrogate_value(const Eigen::VectorXd& x, std::size_t k) const {
        double v = 0.0;
        for (std::size_t n = 0; n < s_.slots(); ++n)
            for (std::size_t m = 0; m < s_.num_uavs(); ++m) {
                if (!a_(m, k, n)) continue;
                double sig = s_.noise_power, lin = r2_lin_const(m, k, n);
                for (std::size_t i = 0; i < s_.num_nodes(); ++i) {
                    int v_i = var_[i][n];
                    if (v_i < 0) continue;
                    double pi = unit_ * x(v_i);
                    sig += pi * gains_(m, i, n);
                    if (i != k) lin -= r2_slope(m, k, n) * gains_(m, i, n) * (pi - p_ref_(i, n));
                }
                v += std::log2(sig) + lin;
            }
        return v;
    }

private:
    double interference_ref(std::size_t m, std::size_t k, std::size_t n) const {
        double acc = s_.noise_power;
        for (std::size_t i = 0; i < s_.num_nodes(); ++i)
            if (i != k) acc += p_ref_(i, n) * gains_(m, i, n);
        return acc;
    }
    double r2_lin_const(std::size_t m, std::size_t k, std::size_t n) const { return -std::log2(interference_ref(m, k, n)); }
    double r2_slope(std::size_t m, std::size_t k, std::size_t n) const { return 1.0 / (interference_ref(m, k, n) * kLn2); }

    SmoothConstraint epigraph(std::size_t k) const {
        SmoothConstraint c;
        std::vector<std::size_t> slots;
        for (std::size_t n = 0; n < s_.slots(); ++n)
            if (node_served(a_, k, n)) slots.push_back(n);
        for (std::size_t n : slots)
            for (std::size_t i = 0; i < s_.num_nodes(); ++i)
                if (var_[i][n] >= 0) c.support.push_back(var_[i][n]);
        std::sort(c.support.begin(), c.support.end());
        c.support.erase(std::unique(c.support.begin(), c.support.end()), c.support.end());
        c.support.push_back(zeta_);
        const int nloc = static_cast<int>(c.support.size());
        // Per served slot: (UAV, list of (local index, gain, is_other, slope)).
        struct Slot {
            double constant = 0.0;  ///< noise + the linear term's constant part
            double noise = 0.0;
            std::vector<std::tuple<int, double, double>> entries;  ///< local idx, gain*unit, linear coefficient
        };
        std::vector<Slot> data;
        std::vector<int> local(static_cast<std::size_t>(nv_), -1);
        for (int i = 0; i < nloc; ++i) local[static_cast<std::size_t>(c.support[static_cast<std::size_t>(i)])] = i;
        for (std::size_t n : slots)
            for (std::size_t m = 0; m < s_.num_uavs(); ++m) {
                if (!a_(m, k, n)) continue;
                Slot sl;
                sl.noise = s_.noise_power;
                double slope = r2_slope(m, k, n);
                sl.constant = r2_lin_const(m, k, n);
                for (std::size_t i = 0; i < s_.num_nodes(); ++i) {
                    int vi = var_[i][n];
                    if (vi < 0) continue;
                    double lincoef = 0.0;
                    if (i != k) {
                        lincoef = -slope * gains_(m, i, n) * unit_;
                        sl.constant += slope * gains_(m, i, n) * p_ref_(i, n);
                    }
                    sl.entries.emplace_back(local[static_cast<std::size_t>(vi)], gains_(m, i, n) * unit_, lincoef);
                }
                data.push_back(std::move(sl));
            }
        c.eval = [data, nloc](const Eigen::VectorXd& z, bool derivs, double& v, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
            v = z(nloc - 1);
            if (derivs) {
                g = Eigen::VectorXd::Zero(nloc);
                g(nloc - 1) = 1.0;
                h = Eigen::MatrixXd::Zero(nloc, nloc);
            }
            for (const auto& sl : data) {
                double S = sl.noise;
                double lin = sl.constant;
                for (const auto& [li, gu, lc] : sl.entries) {
                    S += gu * z(li);
                    lin += lc * z(li);
                }
                if (!(S > 0.0)) return false;
                v -= std::log2(S) + lin;
                if (derivs) {
                    for (const auto& [li, gu, lc] : sl.entries) g(li) -= gu / (S * kLn2) + lc;
                    for (const auto& [li, gu, lc] : sl.entries)
                        for (const auto& [lj, gj, lcj] : sl.entries) h(li, lj) += gu * gj / (S * S * kLn2);
                }
            }
            return true;
        };
        return c;
    }

    void build_energy_rows(const HarvestProfile& profile) {
        const auto K = s_.num_nodes(), N = s_.slots();
        const double dt = s_.slot_seconds(), cap = s_.battery_capacity;
        for (std::size_t k = 0; k < K; ++k) {
            Eigen::VectorXd prefix = Eigen::VectorXd::Zero(nv_);
            bool any = false;
            double harvest = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                harvest += profile.energy(k, n);
                if (var_[k][n] >= 0) {
                    prefix(var_[k][n]) = dt * unit_;
                    any = true;
                }
                if (!any) {
                    double next = n + 1 < N ? profile.energy(k, n + 1) : 0.0;
                    if (harvest + next > cap * (1.0 + 1e-12))
                        throw InfeasibleError("harvest exceeds battery capacity before the node may transmit");
                    continue;
                }
                rows_.push_back(prefix / cap);
                rhs_.push_back(harvest / cap);
                double next = n + 1 < N ? profile.energy(k, n + 1) : 0.0;
                rows_.push_back(-prefix / cap);
                rhs_.push_back((cap - harvest - next) / cap);
            }
        }
    }

    const Scenario& s_;
    const Grid3<std::uint8_t>& a_;
    const Grid3<double>& gains_;
    Grid2<double> p_ref_;
    std::vector<std::vector<int>> var_;
    std::vector<std::pair<std::size_t, std::size_t>> slot_of_;
    std::vector<Eigen::VectorXd> rows_;
    std::vector<double> rhs_;
    double unit_ = 1.0;
    int nv_ = 0;
    int zeta_ = 0;
};

}  // namespace detail

struct PowerResult {
    Grid2<double> power;
    InnerTrace trace;
};

/// Successive convex restrictions in the powers with association and waypoints fixed.
inline PowerResult solve_power_sca(const Grid3<std::uint8_t>& a, const Grid2<Vec2>& q, const Grid2<double>& p_init,
                                   const HarvestProfile& profile, const Scenario& s, const OfflineOptions& opt = {}) {
    auto gains = average_gains(q, s);
    Plan cur;
    cur.waypoints = q;
    cur.association = a;
    cur.power = p_init;
    for (std::size_t k = 0; k < s.num_nodes(); ++k)
        for (std::size_t n = 0; n < s.slots(); ++n)
            if (!node_served(a, k, n)) cur.power(k, n) = 0.0;
    PowerResult out{cur.power, {"power", 0, {}, false}};
    bool feasible = check_energy_feasible(cur.power, profile, s).empty();
    double f = feasible ? evaluate_plan(cur, gains, s).worst : -std::numeric_limits<double>::infinity();
    if (feasible) out.trace.values.push_back(f);
    for (int it = 0; it < opt.inner_max; ++it) {
        detail::PowerRestriction r(a, gains, cur.power, profile, s);
        if (r.num_vars() == 1) break;
        auto sol = solve_convex(r.program(), r.start_point(), opt.barrier);
        Plan cand = cur;
        cand.power = r.powers(sol.x);
        if (!check_energy_feasible(cand.power, profile, s).empty())
            throw SolverError("power restriction returned an energy-infeasible schedule");
        double fc = evaluate_plan(cand, gains, s).worst;
        if (feasible && fc < f) {
            out.trace.rejected_step = fc < f - 1e-9 * std::max(1.0, std::abs(f));
            break;
        }
        double gain = feasible ? fc - f : std::numeric_limits<double>::infinity();
        cur = std::move(cand);
        f = fc;
        feasible = true;
        out.trace.values.push_back(f);
        if (gain <= opt.inner_tol * std::max(std::abs(f - gain), 1e-300)) break;
    }
    if (!feasible) throw InfeasibleError("no energy-feasible power schedule for this association");
    out.power = cur.power;
    return out;
}

// ---------------------------------------------------------------------------
// Alternating loop
// ---------------------------------------------------------------------------

enum class SolveStatus { converged, iteration_cap, infeasible };

inline const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::iteration_cap: return "iteration-cap";
        case SolveStatus::infeasible: return "infeasible";
    }
    return "?";
}

struct SolveOutcome {
    Plan plan;
    std::vector<double> objective_trace;  ///< bits/s, one entry per accepted round plus the start
    std::vector<InnerTrace> inner_traces;
    SolveStatus status = SolveStatus::iteration_cap;
    int rounds = 0;
    int rejected_rounds = 0;
    std::string note;
};

/// Alternates association, trajectory and power updates from a feasible start.
/// A round that would lower the objective is discarded and ends the loop.
inline SolveOutcome run_algorithm1(const Scenario& s, const HarvestProfile& profile, const Plan& init,
                                   const OfflineOptions& opt = {}) {
    auto bad = validate_plan(s, init, profile, 1e-6, 1e-9);
    if (!bad.empty()) throw PreconditionError("initial plan violates " + bad.front().constraint);
    SolveOutcome out;
    out.plan = init;
    double f = average_objective(init, s);
    out.objective_trace.push_back(f);
    for (int round = 1; round <= opt.outer_max; ++round) {
        out.rounds = round;
        Plan cand = out.plan;
        try {
            if (opt.optimize_association) {
                auto probe = probe_powers(profile, s);
                auto res = association_step(cand, profile, s);
                for (std::size_t k = 0; k < s.num_nodes(); ++k)
                    for (std::size_t n = 0; n < s.slots(); ++n) {
                        bool was = node_served(cand.association, k, n), now = node_served(res.association, k, n);
                        if (!now) cand.power(k, n) = 0.0;
                        else if (!was || !(cand.power(k, n) > 0.0)) cand.power(k, n) = probe[k];
                    }
                cand.association = res.association;
            }
            if (!opt.optimize_power) cand.power = exhaustive_power(profile, cand.association, s);
            if (opt.optimize_trajectory) {
                auto tr = solve_trajectory_sca(cand.association, cand.power, cand.waypoints, s, opt);
                tr.trace.round = round;
                cand.waypoints = tr.waypoints;
                out.inner_traces.push_back(std::move(tr.trace));
            }
            if (opt.optimize_power) {
                auto pr = solve_power_sca(cand.association, cand.waypoints, cand.power, profile, s, opt);
                pr.trace.round = round;
                cand.power = pr.power;
                out.inner_traces.push_back(std::move(pr.trace));
            } else {
                cand.power = exhaustive_power(profile, cand.association, s);
            }
        } catch (const InfeasibleError& e) {
            out.status = SolveStatus::infeasible;
            out.note = std::string("round ") + std::to_string(round) + ": " + e.what();
            ++out.rejected_rounds;
            return out;
        }
        double fc = average_objective(cand, s);
        if (fc < f || !validate_plan(s, cand, profile, 1e-6, 1e-9).empty()) {
            ++out.rejected_rounds;
            out.status = SolveStatus::converged;
            out.note = "final round did not improve and was discarded";
            return out;
        }
        double gain = fc - f;
        out.plan = std::move(cand);
        out.objective_trace.push_back(fc);
        f = fc;
        if (gain <= opt.eps_outer * std::max(std::abs(fc - gain), 1e-300)) {
            out.status = SolveStatus::converged;
            return out;
        }
    }
    out.status = SolveStatus::iteration_cap;
    return out;
}

}  // namespace carl

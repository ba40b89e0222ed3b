#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "carl/channel.hpp"
#include "carl/core.hpp"
#include "carl/scenario.hpp"

namespace carl {

/// Expansion data of one UAV-node link at a reference position.
struct LinkReference {
    Vec2 q_ref;        ///< expansion point (nudged off the node when directly overhead)
    double u_r = 0.0;  ///< squared horizontal distance
    double x_r = 0.0;  ///< u_r + H^2
    double theta_r = 0.0;
    double y_r = 0.0;

    static LinkReference make(Vec2 q_ref, const Vec2& node, const Scenario& s) {
        constexpr double kNudge = 1e-3;
        Vec2 off = q_ref - node;
        if (norm(off) < kNudge) {
            double len = norm(off);
            Vec2 dir = len > 0.0 ? (1.0 / len) * off : Vec2{1.0, 0.0};
            q_ref = node + kNudge * dir;
        }
        LinkReference r;
        r.q_ref = q_ref;
        r.u_r = norm_sq(q_ref - node);
        r.x_r = r.u_r + s.altitude * s.altitude;
        r.theta_r = kRadToDeg * std::atan(s.altitude / std::sqrt(r.u_r));
        r.y_r = los_denominator(r.theta_r, s.channel);
        return r;
    }
};

/// Mean gain as a function of the auxiliary pair (X, Y).
inline double gain_xy(double x, double y, const GainConstants& c) { return c.c1 * c.c2 / (x * y) + c.c3 / x; }

/// Exact log2 of the received power plus noise at a UAV: log2(sum_i P_i * Hbar_i + sigma^2).
inline double r1_true(const Vec2& q, std::span<const double> powers, const Scenario& s) {
    double acc = s.noise_power;
    for (std::size_t i = 0; i < powers.size(); ++i)
        if (powers[i] > 0.0) acc += powers[i] * average_gain(q, s.node_positions[i], s);
    return std::log2(acc);
}

/// Exact -log2 of interference plus noise seen while serving node k.
inline double r2_true(const Vec2& q, std::span<const double> powers, std::size_t k, const Scenario& s) {
    double acc = s.noise_power;
    for (std::size_t i = 0; i < powers.size(); ++i)
        if (i != k && powers[i] > 0.0) acc += powers[i] * average_gain(q, s.node_positions[i], s);
    return -std::log2(acc);
}

/// Concave minorant of r1_true around a reference position.
class R1Surrogate {
public:
    struct Term {
        Vec2 node;
        double o = 0.0;       ///< sensitivity to X, nonpositive
        double g = 0.0;       ///< sensitivity to Y, nonpositive
        double x_r = 0.0, y_r = 0.0, u_r = 0.0;
        double e_ref = 0.0;   ///< A * exp(-B (theta_r - A))
        double slope = 0.0;   ///< B * (180/pi) * H / (2 sqrt(u_r) (H^2 + u_r))
    };

    double constant = 0.0;
    std::vector<Term> terms;
    double altitude = 0.0;

    /// Value with optional gradient and Hessian in meters.
    double eval(const Vec2& q, Eigen::Vector2d* grad = nullptr, Eigen::Matrix2d* hess = nullptr) const {
        double v = constant;
        if (grad) grad->setZero();
        if (hess) hess->setZero();
        for (const auto& t : terms) {
            Eigen::Vector2d d(q.x - t.node.x, q.y - t.node.y);
            double z = d.squaredNorm();
            double x = z + altitude * altitude;
            double e = t.e_ref * std::exp(t.slope * (z - t.u_r));
            v += t.o * (x - t.x_r) + t.g * (1.0 + e - t.y_r);
            if (grad) *grad += (2.0 * t.o + 2.0 * t.g * e * t.slope) * d;
            if (hess) {
                *hess += (2.0 * t.o + 2.0 * t.g * e * t.slope) * Eigen::Matrix2d::Identity();
                *hess += (4.0 * t.g * e * t.slope * t.slope) * d * d.transpose();
            }
        }
        return v;
    }

    /// Upper bound of Y for term i at position q.
    double y_upper(std::size_t i, const Vec2& q) const {
        const auto& t = terms[i];
        return 1.0 + t.e_ref * std::exp(t.slope * (norm_sq(q - t.node) - t.u_r));
    }
};

inline R1Surrogate build_r1_llb(const Vec2& q_ref, std::span<const double> powers, const Scenario& s) {
    auto c = GainConstants::from(s);
    const auto& p = s.channel;
    R1Surrogate out;
    out.altitude = s.altitude;
    std::vector<LinkReference> refs;
    std::vector<std::size_t> idx;
    double total = s.noise_power;
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (!(powers[i] > 0.0)) continue;
        refs.push_back(LinkReference::make(q_ref, s.node_positions[i], s));
        idx.push_back(i);
        total += powers[i] * gain_xy(refs.back().x_r, refs.back().y_r, c);
    }
    out.constant = std::log2(total);
    const double scale = 1.0 / (total * kLn2);
    for (std::size_t j = 0; j < refs.size(); ++j) {
        const auto& r = refs[j];
        double pw = powers[idx[j]];
        R1Surrogate::Term t;
        t.node = s.node_positions[idx[j]];
        t.o = -pw * (c.c1 * c.c2 + c.c3 * r.y_r) / (r.x_r * r.x_r * r.y_r) * scale;
        t.g = -pw * c.c1 * c.c2 / (r.x_r * r.y_r * r.y_r) * scale;
        t.x_r = r.x_r;
        t.y_r = r.y_r;
        t.u_r = r.u_r;
        t.e_ref = p.a_coef * std::exp(-p.b_coef * (r.theta_r - p.a_coef));
        t.slope = p.b_coef * kRadToDeg * s.altitude / (2.0 * std::sqrt(r.u_r) * (s.altitude * s.altitude + r.u_r));
        out.terms.push_back(t);
    }
    return out;
}

/// Linearized geometry shared by the interference surrogate and the trajectory constraints.
namespace geometry {

/// Lower bound of ||q - g||^2 around q_r (first-order expansion of a convex function).
inline double u_lin(const Vec2& q, const Vec2& q_r, const Vec2& g) {
    return norm_sq(q_r - g) + 2.0 * dot(q_r - g, q - q_r);
}

/// Lower bound of ||q - g||^2 + H^2.
inline double x_lin(const Vec2& q, const Vec2& q_r, const Vec2& g, double altitude) {
    return u_lin(q, q_r, g) + altitude * altitude;
}

/// Elevation surrogate: (180/pi) atan(H / sqrt(u)).
inline double theta_of_u(double u, double altitude) { return kRadToDeg * std::atan(altitude / std::sqrt(u)); }

/// Tangent of Y(theta) at theta_r; a lower bound of the convex function Y.
inline double y_tan(double theta, double theta_r, const ChannelParams& p) {
    double e = p.a_coef * std::exp(-p.b_coef * (theta_r - p.a_coef));
    return 1.0 + e - p.b_coef * e * (theta - theta_r);
}

/// Lower bound of ||q_m - q_j||^2 around the reference pair.
inline double separation_lin(const Vec2& qm, const Vec2& qj, const Vec2& qm_r, const Vec2& qj_r) {
    Vec2 dr = qm_r - qj_r;
    return norm_sq(dr) + 2.0 * dot(dr, (qm - qm_r) - (qj - qj_r));
}

}  // namespace geometry

/// Lower bound of r2_true in the auxiliary variables: one (X~, Y~) pair per node, entry k ignored.
inline double r2_lb_aux(std::span<const double> x_tilde, std::span<const double> y_tilde,
                        std::span<const double> powers, std::size_t k, const Scenario& s) {
    auto c = GainConstants::from(s);
    double acc = s.noise_power;
    for (std::size_t i = 0; i < powers.size(); ++i)
        if (i != k && powers[i] > 0.0) acc += powers[i] * gain_xy(x_tilde[i], y_tilde[i], c);
    return -std::log2(acc);
}

/// Concave minorant of r2_true in q, with the auxiliary variables at their bounds.
class R2Surrogate {
public:
    struct Term {
        Vec2 node;
        Vec2 q_ref;
        double power = 0.0;
        double u_r = 0.0;
        double theta_r = 0.0;
        double alpha = 0.0;  ///< 1 + A exp(-B (theta_r - A))
        double beta = 0.0;   ///< A B exp(-B (theta_r - A))
        /// Reference sits on the node: the overhead gain, the largest the link can have, is used as a constant.
        bool overhead = false;
        double peak_gain = 0.0;
    };

    std::vector<Term> terms;
    double noise = 0.0;
    double altitude = 0.0;
    GainConstants c;

    /// Returns false if some linearized distance is nonpositive or Y~ is nonpositive.
    bool eval(const Vec2& q, double& value, Eigen::Vector2d* grad = nullptr, Eigen::Matrix2d* hess = nullptr) const {
        const double h2 = altitude * altitude;
        const double c12 = c.c1 * c.c2;
        double S = noise;
        Eigen::Vector2d gS = Eigen::Vector2d::Zero();
        Eigen::Matrix2d hS = Eigen::Matrix2d::Zero();
        for (const auto& t : terms) {
            if (t.overhead) {
                S += t.power * t.peak_gain;
                continue;
            }
            Eigen::Vector2d d(2.0 * (t.q_ref.x - t.node.x), 2.0 * (t.q_ref.y - t.node.y));
            double u = t.u_r + d.x() * (q.x - t.q_ref.x) + d.y() * (q.y - t.q_ref.y);
            if (!(u > 0.0)) return false;
            double su = std::sqrt(u);
            double th = kRadToDeg * std::atan(altitude / su);
            double y = t.alpha - t.beta * (th - t.theta_r);
            if (!(y > 0.0)) return false;
            double x = u + h2;
            double h = c12 / (x * y) + c.c3 / x;
            S += t.power * h;
            if (!grad && !hess) continue;
            double th1 = -kRadToDeg * altitude / (2.0 * su * (u + h2));
            double th2 = kRadToDeg * altitude * (3.0 * u + h2) / (4.0 * u * su * (u + h2) * (u + h2));
            double y1 = -t.beta * th1, y2 = -t.beta * th2;
            double hx = -c12 / (x * x * y) - c.c3 / (x * x);
            double hy = -c12 / (x * y * y);
            double hxx = 2.0 * c12 / (x * x * x * y) + 2.0 * c.c3 / (x * x * x);
            double hyy = 2.0 * c12 / (x * y * y * y);
            double hxy = c12 / (x * x * y * y);
            double dh = hx + hy * y1;
            double d2h = hxx + 2.0 * hxy * y1 + hyy * y1 * y1 + hy * y2;
            gS += t.power * dh * d;
            hS += t.power * d2h * d * d.transpose();
        }
        value = -std::log2(S);
        if (grad) *grad = -gS / (S * kLn2);
        if (hess) *hess = -hS / (S * kLn2) + gS * gS.transpose() / (S * S * kLn2);
        return true;
    }

    /// Y~ of term i at q (the affine-in-elevation bound), used for the Y~ >= 1 constraint.
    double y_tilde(std::size_t i, const Vec2& q) const {
        const auto& t = terms[i];
        if (t.overhead) return t.alpha;
        double u = t.u_r + 2.0 * dot(t.q_ref - t.node, q - t.q_ref);
        return t.alpha - t.beta * (geometry::theta_of_u(u, altitude) - t.theta_r);
    }
};

/// Horizontal offset below which an interfering link is treated as directly overhead.
inline constexpr double kOverheadRadius = 1e-3;

inline R2Surrogate build_r2_lb(const Vec2& q_ref, std::span<const double> powers, std::size_t k, const Scenario& s) {
    R2Surrogate out;
    out.noise = s.noise_power;
    out.altitude = s.altitude;
    out.c = GainConstants::from(s);
    const auto& p = s.channel;
    for (std::size_t i = 0; i < powers.size(); ++i) {
        if (i == k || !(powers[i] > 0.0)) continue;
        auto r = LinkReference::make(q_ref, s.node_positions[i], s);
        R2Surrogate::Term t;
        t.node = s.node_positions[i];
        t.q_ref = r.q_ref;
        t.power = powers[i];
        t.u_r = r.u_r;
        t.theta_r = r.theta_r;
        double e = p.a_coef * std::exp(-p.b_coef * (r.theta_r - p.a_coef));
        t.alpha = 1.0 + e;
        t.beta = p.b_coef * e;
        if (norm(q_ref - s.node_positions[i]) < kOverheadRadius) {
            t.overhead = true;
            t.alpha = los_denominator(90.0, p);
            t.beta = 0.0;
            t.peak_gain = gain_xy(s.altitude * s.altitude, t.alpha, out.c);
        }
        out.terms.push_back(t);
    }
    return out;
}

/// Hessian of ln(C1 C2 / (x y) + C3 / x) with respect to (x, y).
inline Eigen::Matrix2d log_gain_hessian(double x, double y, const GainConstants& c) {
    // phi = -ln x + ln(C1C2 + C3 y) - ln y
    double a = c.c1 * c.c2, b = c.c3;
    Eigen::Matrix2d h;
    h(0, 0) = 1.0 / (x * x);
    h(0, 1) = h(1, 0) = 0.0;
    h(1, 1) = 1.0 / (y * y) - b * b / ((a + b * y) * (a + b * y));
    return h;
}

}  // namespace carl

#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "carl/channel.hpp"
#include "carl/core.hpp"
#include "carl/energy.hpp"
#include "carl/rate.hpp"
#include "carl/scenario.hpp"

namespace carl {

enum class HeuristicKind { UC, CC, SLC };

inline HeuristicKind parse_heuristic(const std::string& name) {
    if (name == "UC" || name == "uc") return HeuristicKind::UC;
    if (name == "CC" || name == "cc") return HeuristicKind::CC;
    if (name == "SLC" || name == "slc") return HeuristicKind::SLC;
    throw ConfigError("heuristic", "unknown flight plan '" + name + "'");
}

inline const char* heuristic_name(HeuristicKind k) {
    switch (k) {
        case HeuristicKind::UC: return "UC";
        case HeuristicKind::CC: return "CC";
        case HeuristicKind::SLC: return "SLC";
    }
    return "?";
}

/// Shape parameters of the fixed flight plans, in meters.
struct HeuristicGeometry {
    double uc_radius = 120.0;
    double cc_radius = 180.0;
    double slc_line = 150.0;
    double slc_radius = 90.0;
};

namespace detail {

/// A closed path through the first UAV's start, parametrized by arc length.
class ClosedPath {
public:
    virtual ~ClosedPath() = default;
    virtual double length() const = 0;
    virtual Vec2 at(double s) const = 0;
};

class CirclePath : public ClosedPath {
public:
    CirclePath(Vec2 start, Vec2 inward, double r, double turn = 1.0) : r_(r), turn_(turn) {
        center_ = start + r * inward;
        phi0_ = std::atan2(start.y - center_.y, start.x - center_.x);
    }
    double length() const override { return 2.0 * kPi * r_; }
    Vec2 at(double s) const override {
        if (s >= length()) s = length();
        double phi = phi0_ + turn_ * s / r_;
        return {center_.x + r_ * std::cos(phi), center_.y + r_ * std::sin(phi)};
    }

private:
    Vec2 center_;
    double r_, turn_, phi0_;
};

/// Straight ingress, one loop tangent to the line end, then egress along the same line.
class LineCirclePath : public ClosedPath {
public:
    LineCirclePath(Vec2 start, Vec2 inward, double line, double r)
        : start_(start), dir_(inward), line_(line), loop_(start + line * inward, Vec2{-inward.y, inward.x}, r) {}
    double length() const override { return 2.0 * line_ + loop_.length(); }
    Vec2 at(double s) const override {
        if (s <= line_) return start_ + s * dir_;
        if (s <= line_ + loop_.length()) return loop_.at(s - line_);
        double back = std::min(s - line_ - loop_.length(), line_);
        return start_ + (line_ - back) * dir_;
    }

private:
    Vec2 start_, dir_;
    double line_;
    CirclePath loop_;
};

}  // namespace detail

/// Fixed two-UAV flight plans. The second UAV mirrors the first through the midpoint of the starts.
/// Even slots hover (so the UAV may serve), odd slots move to the next stop.
inline Grid2<Vec2> heuristic_trajectory(HeuristicKind kind, const Scenario& s, const HeuristicGeometry& geo = {}) {
    if (s.num_uavs() != 2) throw PreconditionError("heuristic flight plans are defined for exactly two UAVs");
    const Vec2 q1 = s.uav_initials[0], q2 = s.uav_initials[1];
    const Vec2 mid = 0.5 * (q1 + q2);
    Vec2 inward = mid - q1;
    inward = (1.0 / norm(inward)) * inward;

    std::unique_ptr<detail::ClosedPath> path;
    switch (kind) {
        case HeuristicKind::UC: path = std::make_unique<detail::CirclePath>(q1, inward, geo.uc_radius); break;
        case HeuristicKind::CC: path = std::make_unique<detail::CirclePath>(q1, inward, geo.cc_radius); break;
        case HeuristicKind::SLC:
            path = std::make_unique<detail::LineCirclePath>(q1, inward, geo.slc_line, geo.slc_radius);
            break;
    }

    const std::size_t N = s.slots();
    const std::size_t moves = N / 2;
    std::vector<Vec2> stops(moves + 1, q1);
    for (std::size_t j = 1; j < moves; ++j) stops[j] = path->at(path->length() * static_cast<double>(j) / moves);
    for (std::size_t j = 1; j <= moves; ++j) {
        double chord = norm(stops[j] - stops[j - 1]);
        if (chord > s.step_limit() + 1e-9) {
            auto need = static_cast<long long>(2.0 * std::ceil(path->length() / s.step_limit()));
            throw PreconditionError(std::string(heuristic_name(kind)) + " plan needs at least N = " +
                                    std::to_string(need) + " slots at the current slot length");
        }
    }
    Grid2<Vec2> w(2, N + 1);
    for (std::size_t n = 0; n <= N; ++n) {
        Vec2 p = stops[std::min(n / 2, moves)];
        if (n == N) p = q1;
        w(0, n) = p;
        w(1, n) = 2.0 * mid - p;
    }
    w(1, 0) = q2;
    w(1, N) = q2;
    return w;
}

inline bool hovers(const Grid2<Vec2>& w, std::size_t m, std::size_t n, double tol = 1e-9) {
    return norm(w(m, n + 1) - w(m, n)) <= tol;
}

/// Greedy nearest pairing in hovering slots: closest (UAV, node) pairs are fixed first,
/// ties go to the lower UAV index and then the lower node index.
inline Grid3<std::uint8_t> nearest_association(const Grid2<Vec2>& w, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    if (w.rows() != M || w.cols() != N + 1) throw DimensionError("waypoints must be M x (N+1)");
    Grid3<std::uint8_t> a(M, K, N, 0);
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t n = 0; n < N; ++n) {
        pairs.clear();
        for (std::size_t m = 0; m < M; ++m) {
            if (!hovers(w, m, n)) continue;
            for (std::size_t k = 0; k < K; ++k) pairs.emplace_back(norm(w(m, n) - s.node_positions[k]), m, k);
        }
        std::sort(pairs.begin(), pairs.end());
        std::vector<bool> uav_busy(M, false), node_busy(K, false);
        for (const auto& [d, m, k] : pairs) {
            if (uav_busy[m] || node_busy[k]) continue;
            a(m, k, n) = 1;
            uav_busy[m] = node_busy[k] = true;
        }
    }
    return a;
}

/// Drains the battery in every slot the node is served; the battery saturates at capacity otherwise.
inline Grid2<double> exhaustive_power(const HarvestProfile& profile, const Grid3<std::uint8_t>& a, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    if (profile.energy.rows() != K || profile.energy.cols() != N) throw DimensionError("profile must be K x N");
    Grid2<double> p(K, N, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double b = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            b = std::min(b + profile.energy(k, n), s.battery_capacity);
            bool served = false;
            for (std::size_t m = 0; m < M; ++m) served = served || a(m, k, n);
            if (served) {
                p(k, n) = b / s.slot_seconds();
                b = 0.0;
            }
        }
    }
    return p;
}

inline Plan heuristic_plan(HeuristicKind kind, const Scenario& s, const HarvestProfile& profile,
                           const HeuristicGeometry& geo = {}) {
    Plan p;
    p.waypoints = heuristic_trajectory(kind, s, geo);
    p.association = nearest_association(p.waypoints, s);
    p.power = exhaustive_power(profile, p.association, s);
    return p;
}

/// Out-and-back plan for any fleet size: each UAV flies toward the centroid of the nodes closest to
/// its start, dwells, and returns. The dwell length is chosen by scanning all symmetric splits.
inline Plan out_and_back_plan(const Scenario& s, const HarvestProfile& profile) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    std::vector<Vec2> target(M);
    std::vector<int> members(M, 0);
    for (std::size_t m = 0; m < M; ++m) target[m] = Vec2{};
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < M; ++m)
            if (norm(s.node_positions[k] - s.uav_initials[m]) < norm(s.node_positions[k] - s.uav_initials[best]))
                best = m;
        target[best] += s.node_positions[k];
        ++members[best];
    }
    for (std::size_t m = 0; m < M; ++m)
        target[m] = members[m] ? (1.0 / members[m]) * target[m] : s.uav_initials[m];

    Plan best = Plan::stationary(s);
    best.association = nearest_association(best.waypoints, s);
    best.power = exhaustive_power(profile, best.association, s);
    double best_worst = evaluate_plan(best, average_gains(best.waypoints, s), s).worst;
    for (std::size_t out = 1; 2 * out < N; ++out) {
        Plan c = Plan::stationary(s);
        for (std::size_t m = 0; m < M; ++m) {
            Vec2 d = target[m] - s.uav_initials[m];
            double len = norm(d);
            if (len == 0.0) continue;
            double step = std::min(s.step_limit(), len / static_cast<double>(out));
            Vec2 u = (1.0 / len) * d;
            for (std::size_t n = 0; n <= N; ++n) {
                std::size_t legs = std::min({n, out, N - n});
                c.waypoints(m, n) = s.uav_initials[m] + (step * static_cast<double>(legs)) * u;
            }
        }
        if (!validate_plan(s, c, 1e-6).empty()) continue;
        c.association = nearest_association(c.waypoints, s);
        c.power = exhaustive_power(profile, c.association, s);
        double worst = evaluate_plan(c, average_gains(c.waypoints, s), s).worst;
        if (worst > best_worst) {
            best_worst = worst;
            best = std::move(c);
        }
    }
    return best;
}

/// Starting point for the offline optimizer: the UC plan for two UAVs when the horizon fits it,
/// otherwise out-and-back.
inline Plan initial_plan(const Scenario& s, const HarvestProfile& profile) {
    if (s.num_uavs() == 2) {
        try {
            Plan p = heuristic_plan(HeuristicKind::UC, s, profile);
            if (validate_plan(s, p, 1e-6).empty()) return p;
        } catch (const PreconditionError&) {
        }
    }
    return out_and_back_plan(s, profile);
}

}  // namespace carl

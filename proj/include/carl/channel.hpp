#pragma once

#include <random>

#include "carl/core.hpp"
#include "carl/scenario.hpp"

namespace carl {

inline double distance(const Vec2& uav, const Vec2& node, double altitude) {
    if (!(altitude > 0.0)) throw PreconditionError("altitude must be positive");
    return std::sqrt(norm_sq(uav - node) + altitude * altitude);
}

/// Free-space loss plus the regime-dependent excess loss, in dB.
inline double path_loss_db(double dist, const Scenario& s, bool is_los) {
    if (!(dist > 0.0)) throw PreconditionError("distance must be positive");
    const auto& c = s.channel;
    double fspl = 20.0 * std::log10(4.0 * kPi * s.carrier_hz * dist / s.light_speed);
    return fspl + (is_los ? c.eta_los_db : c.eta_nlos_db) + c.shadowing_db;
}

/// Elevation angle in degrees; directly overhead is 90.
inline double elevation_deg(double horizontal_dist, double altitude) {
    if (!(altitude > 0.0)) throw PreconditionError("altitude must be positive");
    if (horizontal_dist < 0.0) throw PreconditionError("horizontal distance must be nonnegative");
    return kRadToDeg * std::atan2(altitude, horizontal_dist);
}

inline double los_probability_from_elevation(double theta_deg, const ChannelParams& p) {
    return 1.0 / (1.0 + p.a_coef * std::exp(-p.b_coef * (theta_deg - p.a_coef)));
}

inline double los_probability(double horizontal_dist, double altitude, const ChannelParams& p) {
    return los_probability_from_elevation(elevation_deg(horizontal_dist, altitude), p);
}

/// Constants of the closed-form average gain C1*C2/(X*Y) + C3/X.
struct GainConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;

    static GainConstants from(const Scenario& s) {
        const auto& p = s.channel;
        double w = s.light_speed / (4.0 * kPi * s.carrier_hz);
        GainConstants g;
        g.c1 = w * w * std::pow(10.0, -p.shadowing_db / 10.0);
        g.c2 = std::pow(10.0, -p.eta_los_db / 10.0) - std::pow(10.0, -p.eta_nlos_db / 10.0);
        g.c3 = g.c1 * std::pow(10.0, -p.eta_nlos_db / 10.0);
        return g;
    }
};

/// Y = 1 / rho_LOS written as a function of elevation in degrees.
inline double los_denominator(double theta_deg, const ChannelParams& p) {
    return 1.0 + p.a_coef * std::exp(-p.b_coef * (theta_deg - p.a_coef));
}

/// Average gain in the closed form used by the offline surrogates.
inline double average_gain(const Vec2& uav, const Vec2& node, const Scenario& s) {
    auto k = GainConstants::from(s);
    double r2 = norm_sq(uav - node);
    double x = r2 + s.altitude * s.altitude;
    double y = los_denominator(elevation_deg(std::sqrt(r2), s.altitude), s.channel);
    return k.c1 * k.c2 / (x * y) + k.c3 / x;
}

/// Average gain as the LOS/NLOS mixture of linear path gains.
inline double average_gain_mixture(const Vec2& uav, const Vec2& node, const Scenario& s) {
    double d = distance(uav, node, s.altitude);
    double rho = los_probability(norm(uav - node), s.altitude, s.channel);
    double g_los = from_db(-path_loss_db(d, s, true));
    double g_nlos = from_db(-path_loss_db(d, s, false));
    return rho * g_los + (1.0 - rho) * g_nlos;
}

/// Average gains for every (UAV, node, slot), evaluated at q_m[n].
inline Grid3<double> average_gains(const Grid2<Vec2>& waypoints, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    if (waypoints.rows() != M || waypoints.cols() != N + 1) throw DimensionError("waypoints must be M x (N+1)");
    Grid3<double> g(M, K, N);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t n = 0; n < N; ++n) g(m, k, n) = average_gain(waypoints(m, n), s.node_positions[k], s);
    return g;
}

/// Raw randomness behind one realization: a uniform for the LOS draw and
/// an exponential(1) small-scale power per (UAV, node, slot).
struct FadingDraws {
    Grid3<double> los_uniform;
    Grid3<double> fading_power;

    template <typename Rng>
    static FadingDraws sample(std::size_t M, std::size_t K, std::size_t N, Rng& rng) {
        FadingDraws d{Grid3<double>(M, K, N), Grid3<double>(M, K, N)};
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::exponential_distribution<double> expo(1.0);
        for (std::size_t i = 0; i < d.los_uniform.data().size(); ++i) {
            d.los_uniform.data()[i] = uni(rng);
            d.fading_power.data()[i] = expo(rng);
        }
        return d;
    }
};

struct ChannelRealization {
    Grid3<double> gains;
    Grid3<std::uint8_t> los_flags;
};

/// Instantaneous gain of one link given the draws for that link.
inline double instantaneous_gain(const Vec2& uav, const Vec2& node, const Scenario& s, double los_u,
                                 double fading, bool* los_out = nullptr) {
    double rho = los_probability(norm(uav - node), s.altitude, s.channel);
    bool los = los_u < rho;
    if (los_out) *los_out = los;
    return from_db(-path_loss_db(distance(uav, node, s.altitude), s, los)) * fading;
}

inline ChannelRealization realize(const Grid2<Vec2>& waypoints, const Scenario& s, const FadingDraws& d) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    if (waypoints.rows() != M || waypoints.cols() != N + 1) throw DimensionError("waypoints must be M x (N+1)");
    ChannelRealization r{Grid3<double>(M, K, N), Grid3<std::uint8_t>(M, K, N)};
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t n = 0; n < N; ++n) {
                bool los = false;
                r.gains(m, k, n) = instantaneous_gain(waypoints(m, n), s.node_positions[k], s,
                                                      d.los_uniform(m, k, n), d.fading_power(m, k, n), &los);
                r.los_flags(m, k, n) = los;
            }
    return r;
}

template <typename Rng>
ChannelRealization sample_realization(const Grid2<Vec2>& waypoints, const Scenario& s, Rng& rng) {
    return realize(waypoints, s, FadingDraws::sample(s.num_uavs(), s.num_nodes(), s.slots(), rng));
}

}  // namespace carl

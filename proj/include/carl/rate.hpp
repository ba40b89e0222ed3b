#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "carl/core.hpp"
#include "carl/scenario.hpp"

namespace carl {

/// SINR of node `served` at one UAV; every other node interferes with its full power.
inline double sinr(std::span<const double> powers, std::span<const double> gains, std::size_t served,
                   double noise) {
    if (powers.size() != gains.size() || served >= powers.size())
        throw DimensionError("powers and gains must have matching length covering the served node");
    double interference = 0.0;
    for (std::size_t i = 0; i < powers.size(); ++i)
        if (i != served) interference += powers[i] * gains[i];
    return powers[served] * gains[served] / (interference + noise);
}

/// Per-node rates (bits/s) in slot n. `gains` is M x K x N, `power` is K x N.
inline std::vector<double> slot_rate(const Grid3<std::uint8_t>& association, const Grid2<double>& power,
                                     const Grid3<double>& gains, std::size_t n, const Scenario& s) {
    const auto M = s.num_uavs(), K = s.num_nodes();
    std::vector<double> out(K, 0.0);
    std::vector<double> pw(K), g(K);
    for (std::size_t k = 0; k < K; ++k) pw[k] = power(k, n);
    std::vector<int> col(K, 0);
    for (std::size_t m = 0; m < M; ++m) {
        int row = 0;
        for (std::size_t k = 0; k < K; ++k) {
            auto a = association(m, k, n);
            if (a > 1) throw PreconditionError("association entries must be binary");
            row += a;
            col[k] += a;
        }
        if (row > 1) throw PreconditionError("a UAV serves more than one node in a slot");
        if (row == 0) continue;
        for (std::size_t k = 0; k < K; ++k) g[k] = gains(m, k, n);
        for (std::size_t k = 0; k < K; ++k)
            if (association(m, k, n)) out[k] += s.bandwidth * log2_1p(sinr(pw, g, k, s.noise_power));
    }
    for (std::size_t k = 0; k < K; ++k)
        if (col[k] > 1) throw PreconditionError("a node is served by more than one UAV in a slot");
    return out;
}

struct RateReport {
    Grid2<double> per_slot;      ///< K x N, bits/s
    std::vector<double> totals;  ///< K, sum over slots of bits/s
    double worst = 0.0;
};

inline RateReport evaluate_plan(const Plan& plan, const Grid3<double>& gains, const Scenario& s) {
    check_plan_shape(s, plan);
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    if (gains.dim0() != M || gains.dim1() != K || gains.dim2() != N) throw DimensionError("gains must be M x K x N");
    RateReport r{Grid2<double>(K, N), std::vector<double>(K, 0.0), 0.0};
    for (std::size_t n = 0; n < N; ++n) {
        auto v = slot_rate(plan.association, plan.power, gains, n, s);
        for (std::size_t k = 0; k < K; ++k) {
            r.per_slot(k, n) = v[k];
            r.totals[k] += v[k];
        }
    }
    r.worst = *std::min_element(r.totals.begin(), r.totals.end());
    return r;
}

}  // namespace carl

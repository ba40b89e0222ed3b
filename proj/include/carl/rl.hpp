#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carl/channel.hpp"
#include "carl/core.hpp"
#include "carl/energy.hpp"
#include "carl/rate.hpp"
#include "carl/scenario.hpp"

namespace carl {

enum class RewardKind { WASR, DWASR, ISR };

inline RewardKind parse_reward(const std::string& name) {
    if (name == "WASR" || name == "wasr") return RewardKind::WASR;
    if (name == "DWASR" || name == "dwasr") return RewardKind::DWASR;
    if (name == "ISR" || name == "isr") return RewardKind::ISR;
    throw ConfigError("reward", "unknown reward design '" + name + "'");
}

inline const char* reward_name(RewardKind k) {
    switch (k) {
        case RewardKind::WASR: return "WASR";
        case RewardKind::DWASR: return "DWASR";
        case RewardKind::ISR: return "ISR";
    }
    return "?";
}

/// How episodes draw their randomness. `average` replaces every gain by its mean and every
/// harvest by the profile value, which turns the process into a deterministic MDP.
enum class EnvMode { fading, average };

struct RlParams {
    double lattice_pitch = 60.0;        ///< meters between adjacent lattice points
    double corridor_width = 90.0;       ///< meters around the offline path
    double channel_threshold_db = 5.0;  ///< relative quantization band around the mean gain
    std::size_t power_levels = 4;
    double energy_unit = 75.0;  ///< joules spent per power level
    double gamma = 0.5;
    double penalty = -1000.0;
    double lr_max = 0.9, lr_min = 0.3;
    double eps_max = 0.9, eps_min = 0.1;
    RewardKind reward = RewardKind::ISR;
    double harvest_spread = 0.1;  ///< std-dev of the multiplicative harvest noise, truncated to [0, 2]
    double abs_low_db = -100.0;   ///< fixed thresholds of the conventional agent
    double abs_high_db = -90.0;
    double distance_coef = 1e-4;  ///< slot-n displacement weight is distance_coef * n
    EnvMode mode = EnvMode::fading;

    void validate() const {
        auto pos = [](double v, const char* f) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(f, "must be positive");
        };
        pos(lattice_pitch, "lattice_pitch");
        pos(corridor_width, "corridor_width");
        pos(channel_threshold_db, "channel_threshold_db");
        pos(energy_unit, "energy_unit");
        if (power_levels < 1) throw ConfigError("power_levels", "must be at least 1");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0, 1]");
        if (!(penalty < 0.0)) throw ConfigError("penalty", "must be negative");
        if (!(lr_min > 0.0 && lr_min <= lr_max && lr_max <= 1.0)) throw ConfigError("learning_rate", "need 0 < min <= max <= 1");
        if (!(eps_min >= 0.0 && eps_min <= eps_max && eps_max <= 1.0)) throw ConfigError("exploration", "need 0 <= min <= max <= 1");
        if (!(harvest_spread >= 0.0)) throw ConfigError("harvest_spread", "must be nonnegative");
        if (!(abs_low_db < abs_high_db)) throw ConfigError("abs_thresholds", "low must be below high");
        if (!(distance_coef >= 0.0)) throw ConfigError("distance_coef", "must be nonnegative");
    }
};

inline nlohmann::json rl_params_to_json(const RlParams& p) {
    return {{"lattice_pitch", p.lattice_pitch},
            {"corridor_width", p.corridor_width},
            {"channel_threshold_db", p.channel_threshold_db},
            {"power_levels", p.power_levels},
            {"energy_unit", p.energy_unit},
            {"gamma", p.gamma},
            {"penalty", p.penalty},
            {"lr_max", p.lr_max},
            {"lr_min", p.lr_min},
            {"eps_max", p.eps_max},
            {"eps_min", p.eps_min},
            {"reward", reward_name(p.reward)},
            {"harvest_spread", p.harvest_spread},
            {"abs_low_db", p.abs_low_db},
            {"abs_high_db", p.abs_high_db},
            {"distance_coef", p.distance_coef},
            {"mode", p.mode == EnvMode::fading ? "fading" : "average"}};
}

inline RlParams rl_params_from_json(const nlohmann::json& j) {
    RlParams p;
    if (!j.is_object()) throw ConfigError("rl", "expected an object");
    for (const auto& [key, v] : j.items()) {
        if (key == "lattice_pitch") p.lattice_pitch = v.get<double>();
        else if (key == "corridor_width") p.corridor_width = v.get<double>();
        else if (key == "channel_threshold_db") p.channel_threshold_db = v.get<double>();
        else if (key == "power_levels") p.power_levels = v.get<std::size_t>();
        else if (key == "energy_unit") p.energy_unit = v.get<double>();
        else if (key == "gamma") p.gamma = v.get<double>();
        else if (key == "penalty") p.penalty = v.get<double>();
        else if (key == "lr_max") p.lr_max = v.get<double>();
        else if (key == "lr_min") p.lr_min = v.get<double>();
        else if (key == "eps_max") p.eps_max = v.get<double>();
        else if (key == "eps_min") p.eps_min = v.get<double>();
        else if (key == "reward") p.reward = parse_reward(v.get<std::string>());
        else if (key == "harvest_spread") p.harvest_spread = v.get<double>();
        else if (key == "abs_low_db") p.abs_low_db = v.get<double>();
        else if (key == "abs_high_db") p.abs_high_db = v.get<double>();
        else if (key == "distance_coef") p.distance_coef = v.get<double>();
        else if (key == "mode") {
            auto m = v.get<std::string>();
            if (m == "fading") p.mode = EnvMode::fading;
            else if (m == "average") p.mode = EnvMode::average;
            else throw ConfigError("mode", "expected 'fading' or 'average'");
        } else {
            throw ConfigError(key, "unknown learning parameter");
        }
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Lattice and corridor
// ---------------------------------------------------------------------------

struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct Lattice {
    double pitch = 60.0;
    int side = 10;

    static Lattice cover(double area_side, double pitch) {
        if (!(pitch > 0.0)) throw ConfigError("lattice_pitch", "must be positive");
        int side = static_cast<int>(std::ceil(area_side / pitch - 1e-9));
        if (side < 1 || side > 4096) throw ConfigError("lattice_pitch", "lattice side out of range");
        return {pitch, side};
    }
    Vec2 center(Cell c) const { return {pitch * c.x + pitch / 2.0, pitch * c.y + pitch / 2.0}; }
    Cell cell_of(Vec2 q) const {
        auto clampi = [this](double v) { return std::clamp(static_cast<int>(std::floor(v / pitch)), 0, side - 1); };
        return {clampi(q.x), clampi(q.y)};
    }
    bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < side && c.y < side; }
    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * side + static_cast<std::size_t>(c.x); }
    std::size_t cells() const { return static_cast<std::size_t>(side) * side; }
};

/// Lattice move for flight action 0 (hover), 1 (x-1), 2 (x+1), 3 (y+1), 4 (y-1).
inline Cell move(Cell c, int flight) {
    switch (flight) {
        case 0: return c;
        case 1: return {c.x - 1, c.y};
        case 2: return {c.x + 1, c.y};
        case 3: return {c.x, c.y + 1};
        case 4: return {c.x, c.y - 1};
    }
    throw PreconditionError("flight action must lie in 0..4");
}

/// Per UAV and slot n = 0..N, the lattice cells whose center lies within the corridor width of the
/// offline waypoint.
class Corridor {
public:
    Corridor() = default;
    Corridor(const Grid2<Vec2>& path, const Lattice& lat, double width)
        : path_(path), lat_(lat), width_(width), mask_(path.rows() * path.cols() * lat.cells(), 0) {
        for (std::size_t m = 0; m < path.rows(); ++m)
            for (std::size_t n = 0; n < path.cols(); ++n)
                for (int y = 0; y < lat.side; ++y)
                    for (int x = 0; x < lat.side; ++x)
                        if (norm(lat.center({x, y}) - path(m, n)) <= width) mask_[slot(m, n) + lat.index({x, y})] = 1;
    }

    bool allows(std::size_t m, std::size_t n, Cell c) const {
        return lat_.contains(c) && mask_[slot(m, n) + lat_.index(c)] != 0;
    }
    std::size_t count(std::size_t m, std::size_t n) const {
        std::size_t c = 0;
        for (std::size_t i = 0; i < lat_.cells(); ++i) c += mask_[slot(m, n) + i];
        return c;
    }
    const Grid2<Vec2>& path() const { return path_; }
    double width() const { return width_; }
    std::size_t uavs() const { return path_.rows(); }
    std::size_t stops() const { return path_.cols(); }

private:
    std::size_t slot(std::size_t m, std::size_t n) const { return (m * path_.cols() + n) * lat_.cells(); }

    Grid2<Vec2> path_;
    Lattice lat_;
    double width_ = 0.0;
    std::vector<std::uint8_t> mask_;
};

inline Corridor build_corridor(const Grid2<Vec2>& offline, const Lattice& lat, double d_f) {
    if (!(d_f > 0.0)) throw ConfigError("corridor_width", "must be positive");
    Corridor c(offline, lat, d_f);
    for (std::size_t m = 0; m < offline.rows(); ++m)
        for (std::size_t n = 0; n < offline.cols(); ++n)
            if (c.count(m, n) == 0)
                throw ConfigError("corridor_width", "no lattice cell within " + std::to_string(d_f) + " m of UAV " +
                                                        std::to_string(m) + " at slot " + std::to_string(n) +
                                                        "; use a wider corridor");
    return c;
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

struct UavAction {
    int flight = 0;  ///< 0..4
    int comm = 0;    ///< 0 = idle, otherwise (k-1)*levels + p with 1-based node k and level p
    friend bool operator==(const UavAction&, const UavAction&) = default;
};

/// Maps joint actions to dense indices. Each UAV picks one of 5 + K*levels choices:
/// the five flight moves without communication, or hovering with a communication code.
struct ActionCodec {
    std::size_t uavs = 1;
    std::size_t nodes = 1;
    std::size_t levels = 1;

    std::uint32_t choices() const { return static_cast<std::uint32_t>(5 + nodes * levels); }
    std::uint64_t joint_size() const {
        std::uint64_t t = 1;
        for (std::size_t m = 0; m < uavs; ++m) t *= choices();
        return t;
    }
    static UavAction from_choice(std::uint32_t u) {
        return u < 5 ? UavAction{static_cast<int>(u), 0} : UavAction{0, static_cast<int>(u) - 4};
    }
    static std::uint32_t to_choice(const UavAction& a) {
        return a.comm ? static_cast<std::uint32_t>(4 + a.comm) : static_cast<std::uint32_t>(a.flight);
    }
    std::uint32_t encode(std::span<const UavAction> a) const {
        if (a.size() != uavs) throw DimensionError("one action per UAV expected");
        std::uint32_t idx = 0;
        for (std::size_t m = uavs; m-- > 0;) {
            if (a[m].comm != 0 && a[m].flight != 0) throw PreconditionError("a communicating UAV must hover");
            idx = idx * choices() + to_choice(a[m]);
        }
        return idx;
    }
    std::vector<UavAction> decode(std::uint32_t idx) const {
        std::vector<UavAction> a(uavs);
        for (std::size_t m = 0; m < uavs; ++m) {
            a[m] = from_choice(idx % choices());
            idx /= choices();
        }
        return a;
    }
    std::size_t node_of(int comm) const { return static_cast<std::size_t>(comm - 1) / levels; }
    int level_of(int comm) const { return (comm - 1) % static_cast<int>(levels) + 1; }
    int code(std::size_t node, int level) const { return static_cast<int>(node * levels) + level; }
};

struct MdpState {
    std::size_t n = 0;
    std::vector<Cell> cells;             ///< one per UAV
    std::vector<std::uint8_t> channel;   ///< M x K symbols in {0,1,2}, UAV-major
};

/// Joint actions allowed in `st`: every UAV stays on the lattice and, when a corridor is given,
/// inside its slot-(n+1) corridor; no two UAVs share a next cell; a node transmits only what its
/// battery holds and to at most one UAV. The result is sorted by index and empty when no joint
/// flight move is admissible.
inline std::vector<std::uint32_t> legal_actions(const MdpState& st, const Lattice& lat, const Corridor* corridor,
                                                std::span<const double> batteries, const ActionCodec& codec,
                                                double energy_unit) {
    const std::size_t M = codec.uavs;
    if (st.cells.size() != M || batteries.size() != codec.nodes) throw DimensionError("state does not match the codec");
    std::vector<std::vector<std::uint32_t>> per(M);
    for (std::size_t m = 0; m < M; ++m) {
        for (int f = 0; f < 5; ++f) {
            Cell c = move(st.cells[m], f);
            bool ok = lat.contains(c) && (!corridor || corridor->allows(m, st.n + 1, c));
            if (!ok) continue;
            per[m].push_back(static_cast<std::uint32_t>(f));
            if (f != 0) continue;
            for (std::size_t k = 0; k < codec.nodes; ++k)
                for (int p = 1; p <= static_cast<int>(codec.levels); ++p)
                    if (p * energy_unit <= batteries[k] + 1e-9)
                        per[m].push_back(ActionCodec::to_choice({0, codec.code(k, p)}));
        }
        if (per[m].empty()) return {};
    }
    std::vector<std::uint32_t> out;
    std::vector<std::uint32_t> pick(M, 0);
    std::vector<std::size_t> at(M, 0);
    // Odometer over the per-UAV lists.
    while (true) {
        bool ok = true;
        for (std::size_t m = 0; m < M && ok; ++m) {
            UavAction am = ActionCodec::from_choice(per[m][at[m]]);
            Cell cm = move(st.cells[m], am.flight);
            for (std::size_t j = 0; j < m && ok; ++j) {
                UavAction aj = ActionCodec::from_choice(per[j][at[j]]);
                if (move(st.cells[j], aj.flight) == cm) ok = false;
                if (am.comm && aj.comm && codec.node_of(am.comm) == codec.node_of(aj.comm)) ok = false;
            }
        }
        if (ok) {
            std::uint32_t idx = 0;
            for (std::size_t m = M; m-- > 0;) idx = idx * codec.choices() + per[m][at[m]];
            out.push_back(idx);
        }
        std::size_t m = 0;
        while (m < M && ++at[m] == per[m].size()) at[m++] = 0;
        if (m == M) break;
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Channel symbols and rewards
// ---------------------------------------------------------------------------

/// 0 below mean - eps, 2 above mean + eps, 1 otherwise; the comparison is done in dB.
inline std::uint8_t quantize_relative(double gain, double mean_gain, double eps_db) {
    double x = to_db(gain), c = to_db(mean_gain);
    if (x < c - eps_db) return 0;
    if (x > c + eps_db) return 2;
    return 1;
}

inline std::uint8_t quantize_absolute(double gain, double low_db, double high_db) {
    double x = to_db(gain);
    if (x < low_db) return 0;
    if (x > high_db) return 2;
    return 1;
}

/// Reward before penalties. `z_prev` and `rates` share one unit (the environment uses bits/s/Hz).
inline double reward_value(RewardKind kind, std::span<const double> z_prev, std::span<const double> rates) {
    if (z_prev.size() != rates.size() || rates.empty()) throw DimensionError("one accumulated value and one rate per node");
    switch (kind) {
        case RewardKind::WASR:
        case RewardKind::DWASR: {
            double after = std::numeric_limits<double>::infinity(), before = after;
            for (std::size_t k = 0; k < rates.size(); ++k) {
                after = std::min(after, z_prev[k] + rates[k]);
                before = std::min(before, z_prev[k]);
            }
            return kind == RewardKind::WASR ? after : after - before;
        }
        case RewardKind::ISR: {
            double sum = 0.0;
            for (double r : rates) sum += r;
            return sum / static_cast<double>(rates.size());
        }
    }
    return 0.0;
}

/// Full reward: the penalty replaces the design value when the action leads to a slot with no
/// admissible flight move, or when the last action leaves a UAV away from its start cell.
inline double reward(RewardKind kind, std::span<const double> z_prev, std::span<const double> rates, bool dead_end,
                     bool failed_return, double penalty) {
    if (dead_end || failed_return) return penalty;
    return reward_value(kind, z_prev, rates);
}

/// Reward of the conventional agent: the design value minus mu_n times the summed lattice
/// distance of every UAV from its start cell after the move.
inline double conventional_reward(RewardKind kind, std::span<const double> z_prev, std::span<const double> rates,
                                  std::size_t n, double displacement, double distance_coef, bool failed_return,
                                  double penalty) {
    if (failed_return) return penalty;
    return reward_value(kind, z_prev, rates) - distance_coef * static_cast<double>(n) * displacement;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// Randomness of one episode: fading draws per (UAV, node, slot) and the realized harvest.
struct EpisodeDraws {
    FadingDraws fading;
    Grid2<double> harvest;  ///< K x N joules
};

template <typename Rng>
EpisodeDraws draw_episode(const Scenario& s, const HarvestProfile& mean, const RlParams& p, Rng& rng) {
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    EpisodeDraws d{FadingDraws::sample(M, K, N, rng), mean.energy};
    if (p.harvest_spread > 0.0) {
        std::normal_distribution<double> gauss(1.0, p.harvest_spread);
        for (double& e : d.harvest.data()) {
            double xi;
            do xi = gauss(rng);
            while (xi < 0.0 || xi > 2.0);
            e *= xi;
        }
    }
    return d;
}

inline double link_gain(const Scenario& s, const RlParams& p, const EpisodeDraws& d, Vec2 uav, std::size_t m,
                        std::size_t k, std::size_t n) {
    if (p.mode == EnvMode::average) return average_gain(uav, s.node_positions[k], s);
    return instantaneous_gain(uav, s.node_positions[k], s, d.fading.los_uniform(m, k, n), d.fading.fading_power(m, k, n));
}

/// Per-node rates (bits/s) for UAV positions `pos` and transmit powers `power` (watts, zero when
/// idle); `served[m]` is the node UAV m decodes or -1.
inline std::vector<double> realized_rates(const Scenario& s, const RlParams& p, const EpisodeDraws& d,
                                          std::span<const Vec2> pos, std::span<const double> power,
                                          std::span<const int> served, std::size_t n) {
    const auto K = s.num_nodes();
    std::vector<double> rates(K, 0.0), g(K);
    for (std::size_t m = 0; m < pos.size(); ++m) {
        if (served[m] < 0) continue;
        for (std::size_t i = 0; i < K; ++i) g[i] = link_gain(s, p, d, pos[m], m, i, n);
        auto k = static_cast<std::size_t>(served[m]);
        rates[k] += s.bandwidth * log2_1p(sinr(power, g, k, s.noise_power));
    }
    return rates;
}

struct StepResult {
    std::vector<double> rates;  ///< bits/s per node in the slot just played
    double reward = 0.0;
    bool terminal = false;
    bool dead_end = false;  ///< the next slot has no admissible flight move
    bool returned = false;  ///< set on the last slot when every UAV is back in its start cell
};

/// The online MDP. With an offline plan it is the corridor-constrained agent: flight moves are
/// masked by the corridor, channel symbols are relative to the mean gain along the offline path,
/// and greedy ties lean toward the offline plan. Without one it is the conventional agent:
/// the whole lattice, fixed dB thresholds, and a displacement-weighted reward.
class Mission {
public:
    Mission(const Scenario& s, const HarvestProfile& mean, const RlParams& p, const Plan* offline = nullptr)
        : s_(s), mean_(mean), p_(p) {
        s_.validate();
        p_.validate();
        const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
        if (mean.energy.rows() != K || mean.energy.cols() != N) throw DimensionError("profile must be K x N");
        lat_ = Lattice::cover(s.area_side, p.lattice_pitch);
        codec_ = {M, K, p.power_levels};
        if (codec_.joint_size() > std::numeric_limits<std::uint32_t>::max())
            throw ConfigError("power_levels", "joint action space does not fit a 32-bit index");
        for (const auto& q : s.uav_initials) start_.push_back(lat_.cell_of(q));
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t j = 0; j < m; ++j)
                if (start_[m] == start_[j]) throw ConfigError("uav_initials", "two UAVs start in the same lattice cell");

        guide_ = Grid2<Vec2>(M, N + 1);
        guide_comm_ = Grid2<int>(M, N, 0);
        if (offline) {
            check_plan_shape(s, *offline);
            corridor_ = build_corridor(offline->waypoints, lat_, p.corridor_width);
            for (std::size_t m = 0; m < M; ++m)
                if (!corridor_->allows(m, 0, start_[m]))
                    throw ConfigError("corridor_width", "start cell lies outside the corridor");
            mean_gain_ = average_gains(offline->waypoints, s);
            for (std::size_t m = 0; m < M; ++m) {
                for (std::size_t n = 0; n < N; ++n) guide_(m, n) = offline->waypoints(m, n);
                guide_(m, N) = lat_.center(start_[m]);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t k = 0; k < K; ++k)
                        if (offline->association(m, k, n)) {
                            double units = offline->power(k, n) * s.slot_seconds() / p.energy_unit;
                            int level = std::clamp(static_cast<int>(std::lround(units)), 1, static_cast<int>(p.power_levels));
                            guide_comm_(m, n) = codec_.code(k, level);
                        }
            }
        } else {
            for (std::size_t m = 0; m < M; ++m)
                for (std::size_t n = 0; n <= N; ++n) guide_(m, n) = lat_.center(start_[m]);
        }

        // Mixed-radix state key: slot, one lattice index per UAV, one ternary symbol per link.
        radix_.push_back(N + 1);
        for (std::size_t m = 0; m < M; ++m) radix_.push_back(lat_.cells());
        for (std::size_t i = 0; i < M * K; ++i) radix_.push_back(3);
        unsigned __int128 total = 1;
        for (auto r : radix_) {
            total *= r;
            if (total > std::numeric_limits<std::uint64_t>::max())
                throw ConfigError("lattice_pitch", "state space does not fit a 64-bit key");
        }
    }

    const Scenario& scenario() const { return s_; }
    const RlParams& params() const { return p_; }
    const Lattice& lattice() const { return lat_; }
    const ActionCodec& codec() const { return codec_; }
    const std::optional<Corridor>& corridor() const { return corridor_; }
    bool guided() const { return corridor_.has_value(); }
    const std::vector<Cell>& start_cells() const { return start_; }

    template <typename Rng>
    void reset(Rng& rng) {
        draws_ = p_.mode == EnvMode::fading ? draw_episode(s_, mean_, p_, rng)
                                            : EpisodeDraws{FadingDraws{}, mean_.energy};
        begin();
    }

    /// Restart with caller-supplied randomness (used to replay identical realizations).
    void reset_with(EpisodeDraws d) {
        draws_ = std::move(d);
        begin();
    }

    const MdpState& state() const { return st_; }
    const std::vector<double>& batteries() const { return battery_; }
    const std::vector<double>& accumulated() const { return z_; }  ///< bits/s summed over played slots
    const std::vector<std::uint32_t>& legal() const { return legal_; }
    const EpisodeDraws& draws() const { return draws_; }
    bool finished() const { return finished_; }

    std::uint64_t key() const { return key_of(st_); }

    std::uint64_t key_of(const MdpState& st) const {
        std::uint64_t k = st.n;
        std::size_t r = 1;
        for (const auto& c : st.cells) k = k * radix_[r++] + lat_.index(c);
        for (auto h : st.channel) k = k * radix_[r++] + h;
        return k;
    }

    /// Tie-break score of a joint action: summed distance of the next cells from the guide
    /// targets, then the mismatch against the guide communication codes.
    std::pair<double, int> guide_score(std::uint32_t action) const {
        double dist = 0.0;
        int mismatch = 0;
        auto acts = codec_.decode(action);
        for (std::size_t m = 0; m < acts.size(); ++m) {
            dist += norm(lat_.center(move(st_.cells[m], acts[m].flight)) - guide_(m, st_.n + 1));
            int want = guided() ? guide_comm_(m, st_.n) : 0;
            int got = acts[m].comm;
            if (got == want) continue;
            if (got && want && codec_.node_of(got) == codec_.node_of(want))
                mismatch += std::abs(codec_.level_of(got) - codec_.level_of(want));
            else
                mismatch += static_cast<int>(codec_.levels) + 1;
        }
        return {dist, mismatch};
    }

    StepResult step(std::uint32_t action) {
        if (finished_) throw PreconditionError("episode already finished");
        if (!std::binary_search(legal_.begin(), legal_.end(), action))
            throw PreconditionError("action is not admissible in the current state");
        const auto M = s_.num_uavs(), K = s_.num_nodes(), N = s_.slots();
        const std::size_t n = st_.n;
        auto acts = codec_.decode(action);
        std::vector<Vec2> pos(M);
        std::vector<int> served(M, -1);
        std::vector<double> power(K, 0.0), spend(K, 0.0);
        for (std::size_t m = 0; m < M; ++m) {
            pos[m] = lat_.center(st_.cells[m]);
            if (acts[m].comm) {
                auto k = codec_.node_of(acts[m].comm);
                served[m] = static_cast<int>(k);
                spend[k] = codec_.level_of(acts[m].comm) * p_.energy_unit;
                power[k] = spend[k] / s_.slot_seconds();
            }
        }
        StepResult out;
        out.rates = realized_rates(s_, p_, draws_, pos, power, served, n);
        std::vector<double> norm_rates(K), z_prev = zn_;
        for (std::size_t k = 0; k < K; ++k) {
            norm_rates[k] = out.rates[k] / s_.bandwidth;
            z_[k] += out.rates[k];
            zn_[k] += norm_rates[k];
            battery_[k] -= spend[k];
            if (n + 1 < N) battery_[k] = std::min(battery_[k] + draws_.harvest(k, n + 1), s_.battery_capacity);
        }
        for (std::size_t m = 0; m < M; ++m) st_.cells[m] = move(st_.cells[m], acts[m].flight);
        st_.n = n + 1;
        trail_.push_back(st_.cells);

        if (st_.n == N) {
            out.terminal = true;
            out.returned = st_.cells == start_;
        } else {
            quantize();
            compute_legal();
            out.dead_end = legal_.empty();
            out.terminal = out.dead_end;
        }
        bool failed_return = st_.n == N && !out.returned;
        if (guided()) {
            out.reward = reward(p_.reward, z_prev, norm_rates, out.dead_end, failed_return, p_.penalty);
        } else {
            double disp = 0.0;
            for (std::size_t m = 0; m < M; ++m)
                disp += std::hypot(st_.cells[m].x - start_[m].x, st_.cells[m].y - start_[m].y);
            out.reward = conventional_reward(p_.reward, z_prev, norm_rates, n, disp, p_.distance_coef, failed_return,
                                             p_.penalty);
        }
        finished_ = out.terminal;
        return out;
    }

    /// Lattice cells visited so far, one entry per slot 0..n.
    const std::vector<std::vector<Cell>>& trail() const { return trail_; }

private:
    void begin() {
        const auto M = s_.num_uavs(), K = s_.num_nodes();
        st_.n = 0;
        st_.cells = start_;
        st_.channel.assign(M * K, 1);
        battery_.assign(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) battery_[k] = std::min(draws_.harvest(k, 0), s_.battery_capacity);
        z_.assign(K, 0.0);
        zn_.assign(K, 0.0);
        trail_.assign(1, st_.cells);
        finished_ = false;
        quantize();
        compute_legal();
        finished_ = legal_.empty();
    }

    void quantize() {
        const auto M = s_.num_uavs(), K = s_.num_nodes();
        for (std::size_t m = 0; m < M; ++m) {
            Vec2 q = lat_.center(st_.cells[m]);
            for (std::size_t k = 0; k < K; ++k) {
                double h = link_gain(s_, p_, draws_, q, m, k, st_.n);
                st_.channel[m * K + k] = guided() ? quantize_relative(h, mean_gain_(m, k, st_.n), p_.channel_threshold_db)
                                                  : quantize_absolute(h, p_.abs_low_db, p_.abs_high_db);
            }
        }
    }

    void compute_legal() {
        legal_ = legal_actions(st_, lat_, corridor_ ? &*corridor_ : nullptr, battery_, codec_, p_.energy_unit);
    }

    Scenario s_;
    HarvestProfile mean_;
    RlParams p_;
    Lattice lat_;
    ActionCodec codec_;
    std::optional<Corridor> corridor_;
    Grid3<double> mean_gain_;
    Grid2<Vec2> guide_;
    Grid2<int> guide_comm_;
    std::vector<Cell> start_;
    std::vector<std::size_t> radix_;

    EpisodeDraws draws_;
    MdpState st_;
    std::vector<double> battery_, z_, zn_;
    std::vector<std::uint32_t> legal_;
    std::vector<std::vector<Cell>> trail_;
    bool finished_ = true;
};

// ---------------------------------------------------------------------------
// Q-table
// ---------------------------------------------------------------------------

/// Sparse action values keyed by state; unvisited entries read as zero.
class QTable {
public:
    using Row = std::vector<std::pair<std::uint32_t, double>>;

    double value(std::uint64_t state, std::uint32_t action) const {
        auto it = map_.find(state);
        if (it == map_.end()) return 0.0;
        for (const auto& [a, v] : it->second)
            if (a == action) return v;
        return 0.0;
    }

    void set(std::uint64_t state, std::uint32_t action, double v) {
        if (!std::isfinite(v)) throw SolverError("non-finite action value");
        auto& row = map_[state];
        for (auto& [a, old] : row)
            if (a == action) {
                old = v;
                return;
            }
        row.emplace_back(action, v);
    }

    /// Largest value over `legal` (sorted), counting unvisited actions as zero.
    double max_value(std::uint64_t state, const std::vector<std::uint32_t>& legal) const {
        if (legal.empty()) return 0.0;
        auto it = map_.find(state);
        if (it == map_.end()) return 0.0;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t seen = 0;
        for (const auto& [a, v] : it->second)
            if (std::binary_search(legal.begin(), legal.end(), a)) {
                best = std::max(best, v);
                ++seen;
            }
        if (seen < legal.size()) best = std::max(best, 0.0);
        return best;
    }

    const Row* row(std::uint64_t state) const {
        auto it = map_.find(state);
        return it == map_.end() ? nullptr : &it->second;
    }

    std::size_t states() const { return map_.size(); }
    std::size_t entries() const {
        std::size_t n = 0;
        for (const auto& [k, r] : map_) n += r.size();
        return n;
    }

    /// Snapshot with sorted keys and actions so equal tables serialize to equal bytes.
    nlohmann::json to_json(const RlParams& p) const {
        std::vector<std::uint64_t> keys;
        keys.reserve(map_.size());
        for (const auto& [k, r] : map_) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        nlohmann::json rows = nlohmann::json::array();
        for (auto k : keys) {
            Row r = map_.at(k);
            std::sort(r.begin(), r.end());
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& [a, v] : r) entries.push_back({a, v});
            rows.push_back({k, std::move(entries)});
        }
        return {{"params", rl_params_to_json(p)}, {"states", std::move(rows)}};
    }

    static QTable from_json(const nlohmann::json& j, RlParams* params = nullptr) {
        QTable t;
        if (params && j.contains("params")) *params = rl_params_from_json(j.at("params"));
        for (const auto& row : j.at("states")) {
            auto key = row.at(0).get<std::uint64_t>();
            for (const auto& e : row.at(1)) t.set(key, e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
        }
        return t;
    }

    friend bool operator==(const QTable& a, const QTable& b) {
        if (a.map_.size() != b.map_.size()) return false;
        for (const auto& [k, r] : a.map_) {
            auto it = b.map_.find(k);
            if (it == b.map_.end()) return false;
            Row x = r, y = it->second;
            std::sort(x.begin(), x.end());
            std::sort(y.begin(), y.end());
            if (x != y) return false;
        }
        return true;
    }

private:
    std::unordered_map<std::uint64_t, Row> map_;
};

/// Highest-valued legal action; ties go to the action closest to the guide, then the lowest index.
inline std::uint32_t greedy_action(const QTable& q, const Mission& env) {
    const auto& legal = env.legal();
    if (legal.empty()) throw PreconditionError("no admissible action");
    const auto* row = q.row(env.key());
    auto value_of = [row](std::uint32_t a) {
        if (!row) return 0.0;
        for (const auto& [b, v] : *row)
            if (b == a) return v;
        return 0.0;
    };
    double best = -std::numeric_limits<double>::infinity();
    for (auto a : legal) best = std::max(best, value_of(a));
    std::uint32_t pick = 0;
    std::pair<double, int> pick_score{std::numeric_limits<double>::infinity(), 0};
    for (auto a : legal) {
        if (value_of(a) != best) continue;
        auto sc = env.guide_score(a);
        if (sc < pick_score) {
            pick_score = sc;
            pick = a;
        }
    }
    return pick;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

inline double decayed(double hi, double lo, std::size_t step, std::size_t total) {
    double frac = total ? std::max((static_cast<double>(total) - static_cast<double>(step)) / static_cast<double>(total), 0.0) : 0.0;
    return (hi - lo) * frac + lo;
}

struct TrainOptions {
    std::size_t episodes = 1000;
    std::uint64_t seed = 1;
};

struct TrainingCurves {
    std::vector<double> returns;        ///< undiscounted reward sum per episode
    std::vector<std::uint8_t> success;  ///< all UAVs back in their start cells after slot N-1
};

struct TrainResult {
    QTable table;
    TrainingCurves curves;
};

/// Tabular Q-learning. The learning rate and exploration decay linearly with the number of
/// learning steps taken, measured against the episode budget, and stay at their floor once the
/// step count passes it. A terminal transition (last slot or a dead end) is updated with its
/// reward alone.
inline TrainResult train(Mission& env, const TrainOptions& o) {
    const auto& p = env.params();
    TrainResult out;
    out.curves.returns.reserve(o.episodes);
    out.curves.success.reserve(o.episodes);
    std::mt19937_64 explore(derive_seed(o.seed, 1)), world(derive_seed(o.seed, 2));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::size_t steps = 0;
    for (std::size_t ep = 0; ep < o.episodes; ++ep) {
        env.reset(world);
        double ret = 0.0;
        bool success = false;
        while (!env.finished()) {
            const double lr = decayed(p.lr_max, p.lr_min, steps, o.episodes);
            const double eps = decayed(p.eps_max, p.eps_min, steps, o.episodes);
            ++steps;
            const auto& legal = env.legal();
            std::uint32_t a;
            if (uni(explore) < eps) {
                std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
                a = legal[pick(explore)];
            } else {
                a = greedy_action(out.table, env);
            }
            const auto key = env.key();
            auto r = env.step(a);
            ret += r.reward;
            double target = r.reward;
            if (!r.terminal) target += p.gamma * out.table.max_value(env.key(), env.legal());
            double old = out.table.value(key, a);
            out.table.set(key, a, (1.0 - lr) * old + lr * target);
            success = r.returned;
        }
        out.curves.returns.push_back(ret);
        out.curves.success.push_back(success);
    }
    return out;
}

inline TrainResult train_carl(const Scenario& s, const Plan& offline, const HarvestProfile& profile, const RlParams& p,
                              const TrainOptions& o) {
    Mission env(s, profile, p, &offline);
    return train(env, o);
}

inline TrainResult train_conventional(const Scenario& s, const HarvestProfile& profile, const RlParams& p,
                                      const TrainOptions& o) {
    Mission env(s, profile, p, nullptr);
    return train(env, o);
}

struct RolloutStats {
    std::size_t rollouts = 0;
    double mean_worst = 0.0;  ///< worst per-node rate summed over slots, bits/s
    double ci95 = 0.0;        ///< half-width of the normal 95% interval of the mean
    double success_probability = 0.0;
    std::size_t penalized = 0;
    std::size_t corridor_violations = 0;  ///< positions outside the corridor in non-penalized episodes
    std::vector<double> worst;
};

inline void finish_stats(RolloutStats& st, std::size_t successes) {
    st.rollouts = st.worst.size();
    if (st.rollouts == 0) return;
    double sum = 0.0;
    for (double w : st.worst) sum += w;
    st.mean_worst = sum / static_cast<double>(st.rollouts);
    double var = 0.0;
    for (double w : st.worst) var += (w - st.mean_worst) * (w - st.mean_worst);
    if (st.rollouts > 1) var /= static_cast<double>(st.rollouts - 1);
    st.ci95 = 1.96 * std::sqrt(var / static_cast<double>(st.rollouts));
    st.success_probability = static_cast<double>(successes) / static_cast<double>(st.rollouts);
}

/// Greedy episodes over fresh realizations; rollout i draws from stream derive_seed(seed, i).
inline RolloutStats rollout_policy(const QTable& q, Mission& env, std::size_t num_rollouts, std::uint64_t seed) {
    RolloutStats st;
    std::size_t successes = 0;
    for (std::size_t i = 0; i < num_rollouts; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        env.reset(rng);
        bool success = false, penalized = env.finished();
        while (!env.finished()) {
            auto r = env.step(greedy_action(q, env));
            if (r.dead_end || (r.terminal && !r.returned)) penalized = true;
            success = r.returned;
        }
        const auto& z = env.accumulated();
        st.worst.push_back(*std::min_element(z.begin(), z.end()));
        successes += success;
        st.penalized += penalized;
        if (!penalized && env.corridor()) {
            const auto& path = env.corridor()->path();
            const auto& trail = env.trail();
            for (std::size_t n = 0; n < trail.size(); ++n)
                for (std::size_t m = 0; m < trail[n].size(); ++m)
                    if (norm(env.lattice().center(trail[n][m]) - path(m, n)) > env.corridor()->width() + 1e-9)
                        ++st.corridor_violations;
        }
    }
    finish_stats(st, successes);
    return st;
}

/// Flies an offline plan over the same kind of realizations the agents see. A node spends the
/// planned energy when its battery holds it and otherwise whatever is left.
inline RolloutStats execute_plan(const Plan& plan, const Scenario& s, const HarvestProfile& mean, const RlParams& p,
                                 std::size_t num_rollouts, std::uint64_t seed) {
    check_plan_shape(s, plan);
    const auto M = s.num_uavs(), K = s.num_nodes(), N = s.slots();
    RolloutStats st;
    for (std::size_t i = 0; i < num_rollouts; ++i) {
        std::mt19937_64 rng(derive_seed(seed, i));
        EpisodeDraws d = p.mode == EnvMode::fading ? draw_episode(s, mean, p, rng) : EpisodeDraws{FadingDraws{}, mean.energy};
        std::vector<double> battery(K), z(K, 0.0), power(K);
        for (std::size_t k = 0; k < K; ++k) battery[k] = std::min(d.harvest(k, 0), s.battery_capacity);
        std::vector<Vec2> pos(M);
        std::vector<int> served(M);
        for (std::size_t n = 0; n < N; ++n) {
            std::fill(power.begin(), power.end(), 0.0);
            for (std::size_t m = 0; m < M; ++m) {
                pos[m] = plan.waypoints(m, n);
                served[m] = -1;
                for (std::size_t k = 0; k < K; ++k)
                    if (plan.association(m, k, n)) served[m] = static_cast<int>(k);
            }
            for (std::size_t k = 0; k < K; ++k) {
                double spend = std::min(plan.power(k, n) * s.slot_seconds(), std::max(battery[k], 0.0));
                power[k] = spend / s.slot_seconds();
                battery[k] -= spend;
            }
            auto rates = realized_rates(s, p, d, pos, power, served, n);
            for (std::size_t k = 0; k < K; ++k) {
                z[k] += rates[k];
                if (n + 1 < N) battery[k] = std::min(battery[k] + d.harvest(k, n + 1), s.battery_capacity);
            }
        }
        st.worst.push_back(*std::min_element(z.begin(), z.end()));
    }
    finish_stats(st, num_rollouts);
    return st;
}

}  // namespace carl

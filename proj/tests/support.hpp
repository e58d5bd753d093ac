#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tsc/agent.hpp"

namespace tsc::testing {

/// `lanes` lanes with small random segment counts, split round-robin into
/// `phases` phases.
inline DurationState random_state(Rng& rng, std::size_t lanes, std::size_t phases, int phase = 0) {
    DurationState s;
    for (std::size_t l = 0; l < lanes; ++l) {
        std::array<double, 4> x{};
        for (double& v : x) v = static_cast<double>(uniform_index(rng, 9));
        s.lanes.push_back(x);
    }
    s.phase_lanes.assign(phases, {});
    for (std::size_t l = 0; l < lanes; ++l) s.phase_lanes[l % phases].push_back(l);
    s.phase = phase;
    return s;
}

struct GradCheck {
    double worst = 0.0;              // max relative error over checked scalars
    std::string worst_name;
    std::size_t touched = 0;         // scalars with a non-zero analytic gradient
    std::vector<std::string> dead;   // tensors whose gradient is zero up to rounding
    double dead_numeric = 0.0;       // largest finite difference over dead tensors
};

/// Finite differences of sum(q .* w) against the tape gradient for every
/// scalar, at two step sizes: a five-point stencil with h = 1e-3 (accurate
/// for gradients near rounding level) and a central difference with
/// h = 1e-5 (accurate next to a relu kink, which the wide stencil may
/// straddle). A scalar's error is the smaller of the two relative errors,
/// each with an absolute floor of 1e-6.
inline GradCheck gradient_check(const ModelConfig& config, const ParamStore& params, const DurationState& state, Rng& rng) {
    Tape probe(params);
    const Matrix shape = probe.value(q_forward(probe, config, state));
    Matrix w(shape.rows(), shape.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = 2.0 * uniform01(rng) - 1.0;

    auto objective = [&](const ParamStore& p) {
        Tape t(p);
        return (t.value(q_forward(t, config, state)).array() * w.array()).sum();
    };
    GradStore grads = params.zeros_like();
    {
        Tape t(params);
        const Var out = q_forward(t, config, state);
        t.backward(out, w, grads);
    }

    GradCheck r;
    ParamStore work = params;
    const double h = 1e-3, h_narrow = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
        const bool dead = grads.at(k).cwiseAbs().maxCoeff() < 1e-10;
        if (dead) r.dead.push_back(params.names()[k]);
        for (Eigen::Index e = 0; e < params.at(k).size(); ++e) {
            const double orig = params.at(k).data()[e];
            auto at = [&](double d) {
                work.at(k).data()[e] = orig + d;
                const double v = objective(work);
                work.at(k).data()[e] = orig;
                return v;
            };
            const double wide = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
            const double narrow = (at(h_narrow) - at(-h_narrow)) / (2 * h_narrow);
            if (dead) {
                // Flat up to rounding: the relative error of noise is meaningless.
                r.dead_numeric = std::max(r.dead_numeric, std::abs(wide));
                continue;
            }
            const double an = grads.at(k).data()[e];
            auto rel_to = [an](double num) { return std::abs(num - an) / std::max({std::abs(num), std::abs(an), 1e-6}); };
            const double rel = std::min(rel_to(wide), rel_to(narrow));
            if (rel > r.worst) {
                r.worst = rel;
                r.worst_name = params.names()[k] + "[" + std::to_string(e) + "]";
            }
            if (an != 0.0) ++r.touched;
        }
    }
    return r;
}

/// Every model variant: Networks 1-3 with each fusion, plus Lite.
inline std::vector<ModelConfig> all_variants() {
    std::vector<ModelConfig> out;
    for (int net = 1; net <= 3; ++net)
        for (int f = 1; f <= 4; ++f) {
            ModelConfig c;
            c.network = net;
            c.fusion = static_cast<Fusion>(f);
            out.push_back(c);
        }
    out.push_back(ModelConfig::lite());
    return out;
}

inline std::string describe(const ModelConfig& c) {
    if (c.agent == AgentVariant::Lite) return "lite";
    return "network " + std::to_string(c.network) + " fusion " + std::to_string(static_cast<int>(c.fusion)) +
           (c.per_feature_embedding ? " per-feature" : "");
}

/// Two-state deterministic duration problem. State 0 has a short queue,
/// state 1 a long one; rewards and successors depend on the duration index.
struct TinyMdp {
    std::array<DurationState, 2> states;
    std::array<std::array<double, 7>, 2> reward{};
    std::array<std::array<int, 7>, 2> next{};

    TinyMdp() {
        for (int s = 0; s < 2; ++s) {
            DurationState d;
            d.lanes = s == 0 ? std::vector<std::array<double, 4>>{{1, 0, 0, 0}, {2, 0, 0, 0}}
                             : std::vector<std::array<double, 4>>{{9, 6, 2, 0}, {8, 5, 3, 1}};
            d.phase_lanes = {{0, 1}};
            states[static_cast<std::size_t>(s)] = d;
        }
        for (int a = 0; a < 7; ++a) {
            const auto k = static_cast<std::size_t>(a);
            // Short queue: every extra step of green costs, but a green of
            // index 4 or more reaches the rewarding state 1. The myopic choice
            // (index 0) is not optimal.
            reward[0][k] = -0.1 * a;
            next[0][k] = a >= 4 ? 1 : 0;
            // Long queue: index 2 keeps the state; 3 and above fall back to 0.
            reward[1][k] = 0.5 - 0.15 * std::abs(a - 2);
            next[1][k] = a >= 3 ? 0 : 1;
        }
    }

    /// Optimal q-values by value iteration.
    std::array<std::array<double, 7>, 2> value_iteration(double gamma) const {
        std::array<double, 2> v{0.0, 0.0};
        std::array<std::array<double, 7>, 2> q{};
        for (int it = 0; it < 2000; ++it) {
            for (std::size_t s = 0; s < 2; ++s)
                for (std::size_t a = 0; a < 7; ++a) q[s][a] = reward[s][a] + gamma * v[static_cast<std::size_t>(next[s][a])];
            for (std::size_t s = 0; s < 2; ++s) v[s] = *std::max_element(q[s].begin(), q[s].end());
        }
        return q;
    }

    static int argmax(const std::array<double, 7>& q) {
        return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    }

    /// Trains a fresh full agent on every transition of the problem and
    /// returns its greedy action per state.
    std::array<int, 2> learn(const Hyperparams& hp, int rounds, std::uint64_t seed) const {
        const ModelConfig config;
        ParamStore params = make_params(config, seed);
        Adam adam(params, hp.lr);
        ReplayBuffer buffer(hp.buffer_capacity);
        for (std::size_t copy = 0; copy < 200; ++copy)
            for (std::size_t s = 0; s < 2; ++s)
                for (std::size_t a = 0; a < 7; ++a)
                    buffer.push({states[s], static_cast<int>(a), reward[s][a],
                                 states[static_cast<std::size_t>(next[s][a])], false, 0});
        Rng rng(seed);
        for (int r = 0; r < rounds; ++r) {
            const ParamStore target = params;
            train_round(buffer, config, params, target, adam, hp, rng);
        }
        std::array<int, 2> greedy{};
        for (std::size_t s = 0; s < 2; ++s) {
            const Matrix q = q_selected(config, params, states[s]);
            greedy[s] = static_cast<int>(select_duration(q, 0.0, rng).index);
        }
        return greedy;
    }
};

} // namespace tsc::testing

#pragma once

// Shared test utilities: small random MDP generators and an independent
// value-iteration oracle kept deliberately separate from the library
// implementation (V-based sweep here vs Q-table sweep in the library).

#include <cmath>
#include <vector>

#include "lql/mdp.hpp"
#include "lql/util.hpp"

namespace testutil {

// V-sweep value iteration; returns the (s, a) Q-table.
inline std::vector<double> vi_reference(const lql::MDPSpec& m, double tol = 1e-12) {
    const int S = m.num_states, A = m.num_actions;
    std::vector<double> v(S, 0.0), v_next(S, 0.0);
    const double stop = m.gamma > 0.0 ? tol * (1.0 - m.gamma) / m.gamma : tol;
    for (int it = 0; it < 2'000'000; ++it) {
        double diff = 0.0;
        for (int s = 0; s < S; ++s) {
            double best = -1e300;
            for (int a = 0; a < A; ++a) {
                double acc = m.rew(s, a);
                for (int s2 = 0; s2 < S; ++s2) acc += m.gamma * m.trans(s, a, s2) * v[s2];
                if (acc > best) best = acc;
            }
            v_next[s] = best;
            diff = std::max(diff, std::abs(best - v[s]));
        }
        v.swap(v_next);
        if (diff <= stop) break;
    }
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double acc = m.rew(s, a);
            for (int s2 = 0; s2 < S; ++s2) acc += m.gamma * m.trans(s, a, s2) * v[s2];
            q[static_cast<std::size_t>(s) * A + a] = acc;
        }
    return q;
}

// Deterministic MDP with random successor per (s, a) and random rewards in
// [-1, 1]. Continuing (no terminal) unless with_terminal is set, in which
// case state S-1 absorbs.
inline lql::MDPSpec random_deterministic_mdp(lql::Rng& rng, int S, int A, double gamma,
                                             bool with_terminal = false) {
    lql::MDPSpec m;
    m.num_states = S;
    m.num_actions = A;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    m.reward.assign(static_cast<std::size_t>(S) * A, 0.0);
    m.terminal.assign(S, 0);
    m.start.assign(S, 0.0);
    m.start[0] = 1.0;
    if (with_terminal) m.terminal[S - 1] = 1;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            if (m.is_terminal(s)) {
                m.trans(s, a, s) = 1.0;
                continue;
            }
            const int s2 = static_cast<int>(lql::uniform_index(rng, S));
            m.trans(s, a, s2) = 1.0;
            m.rew(s, a) = 2.0 * lql::uniform01(rng) - 1.0;
        }
    lql::validate_spec(m);
    return m;
}

// Fully stochastic MDP with dense random rows.
inline lql::MDPSpec random_stochastic_mdp(lql::Rng& rng, int S, int A, double gamma,
                                          bool with_terminal = false) {
    lql::MDPSpec m;
    m.num_states = S;
    m.num_actions = A;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(S) * A * S, 0.0);
    m.reward.assign(static_cast<std::size_t>(S) * A, 0.0);
    m.terminal.assign(S, 0);
    m.start.assign(S, 0.0);
    m.start[0] = 1.0;
    if (with_terminal) m.terminal[S - 1] = 1;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            if (m.is_terminal(s)) {
                m.trans(s, a, s) = 1.0;
                continue;
            }
            double sum = 0.0;
            std::vector<double> w(S);
            for (int s2 = 0; s2 < S; ++s2) {
                w[s2] = -std::log(1.0 - lql::uniform01(rng));
                sum += w[s2];
            }
            for (int s2 = 0; s2 < S; ++s2) m.trans(s, a, s2) = w[s2] / sum;
            // Renormalize the row exactly so the 1e-9 invariant cannot drift.
            double row_sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) row_sum += m.trans(s, a, s2);
            for (int s2 = 0; s2 < S; ++s2) m.trans(s, a, s2) /= row_sum;
            m.rew(s, a) = 2.0 * lql::uniform01(rng) - 1.0;
        }
    lql::validate_spec(m);
    return m;
}

// The 3-state "bad tail" MDP: from s0 the good action reaches s1 with r=0;
// at s1 the optimal action pays 1 into the terminal while the bad action
// pays 0 into the terminal. A behavior that always takes the bad action at
// s1 poisons multi-step backups from s0.
//   actions: 0 = bad, 1 = good (ids chosen so ties do not favor the fix)
inline lql::MDPSpec bad_tail_mdp(double gamma = 0.9) {
    lql::MDPSpec m;
    m.num_states = 3;
    m.num_actions = 2;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(3 * 2 * 3, 0.0);
    m.reward.assign(3 * 2, 0.0);
    m.terminal = {0, 0, 1};
    m.start = {1.0, 0.0, 0.0};
    const int bad = 0, good = 1;
    // s0: good -> s1 (r 0), bad -> self-loop (r 0)
    m.trans(0, good, 1) = 1.0;
    m.trans(0, bad, 0) = 1.0;
    // s1: good -> terminal with r 1, bad -> terminal with r 0
    m.trans(1, good, 2) = 1.0;
    m.rew(1, good) = 1.0;
    m.trans(1, bad, 2) = 1.0;
    // terminal
    m.trans(2, 0, 2) = 1.0;
    m.trans(2, 1, 2) = 1.0;
    lql::validate_spec(m);
    return m;
}

// Behavior for the bad-tail MDP: always take the good action at s0, always
// the bad action at s1.
inline lql::BehaviorPolicy bad_tail_behavior() {
    std::vector<double> probs = {
        0.0, 1.0,  // s0: good
        1.0, 0.0,  // s1: bad
        0.5, 0.5,  // terminal: irrelevant
    };
    return lql::BehaviorPolicy::fixed_table(std::move(probs), 3, 2);
}

}  // namespace testutil

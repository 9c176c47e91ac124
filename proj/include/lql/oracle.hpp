#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "lql/mdp.hpp"
#include "lql/util.hpp"

namespace lql {

inline constexpr double kOracleTol = 1e-10;

// Exact optimal action-value function from value iteration, together with the
// state values v(s) = max_a q(s,a) and the final Bellman residual.
struct QStar {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> q;  // (s, a)
    std::vector<double> v;  // per state
    double residual = 0.0;
    std::vector<double> iteration_gaps;  // sup-norm distance between successive iterates

    double at(int s, int a) const { return q[static_cast<std::size_t>(s) * num_actions + a]; }
    double value(int s) const { return v[s]; }

    // Greedy action with ties broken by lowest action id.
    int greedy(int s) const {
        int best = 0;
        double best_q = at(s, 0);
        for (int a = 1; a < num_actions; ++a)
            if (at(s, a) > best_q) {
                best_q = at(s, a);
                best = a;
            }
        return best;
    }
};

namespace detail {
inline void bellman_backup(const MDPSpec& m, const std::vector<double>& q, std::vector<double>& out) {
    const int S = m.num_states, A = m.num_actions;
    std::vector<double> vmax(S);
    for (int s = 0; s < S; ++s) {
        double best = q[static_cast<std::size_t>(s) * A];
        for (int a = 1; a < A; ++a) best = std::max(best, q[static_cast<std::size_t>(s) * A + a]);
        vmax[s] = best;
    }
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double acc = 0.0;
            const double* row = m.row(s, a);
            for (int s2 = 0; s2 < S; ++s2) acc += row[s2] * vmax[s2];
            out[static_cast<std::size_t>(s) * A + a] = m.rew(s, a) + m.gamma * acc;
        }
    }
}

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}
}  // namespace detail

// Value iteration to a sup-norm Bellman residual <= tol. Since terminal states
// self-loop with reward 0, their optimal values come out exactly 0.
inline QStar value_iteration(const MDPSpec& mdp, double tol = kOracleTol) {
    if (tol <= 0.0) throw InvalidCall("value_iteration: tol must be positive");
    const int S = mdp.num_states, A = mdp.num_actions;
    QStar out;
    out.num_states = S;
    out.num_actions = A;
    out.q.assign(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> next(out.q.size(), 0.0);

    // Stop when successive iterates are close enough that the one-step
    // residual gamma/(1-gamma) * diff is certainly below tol.
    const double stop = (mdp.gamma > 0.0) ? tol * (1.0 - mdp.gamma) / mdp.gamma : tol;
    const int max_iters = 1'000'000;
    for (int it = 0; it < max_iters; ++it) {
        detail::bellman_backup(mdp, out.q, next);
        const double diff = detail::sup_diff(out.q, next);
        out.iteration_gaps.push_back(diff);
        out.q.swap(next);
        if (diff <= stop) break;
    }
    detail::bellman_backup(mdp, out.q, next);
    out.residual = detail::sup_diff(out.q, next);

    out.v.assign(S, 0.0);
    for (int s = 0; s < S; ++s) {
        double best = out.at(s, 0);
        for (int a = 1; a < A; ++a) best = std::max(best, out.at(s, a));
        out.v[s] = best;
    }
    return out;
}

// Delta(s, a) = Q*(s, a*(s)) - Q*(s, a) >= 0; zero iff `a` is greedy at `s`.
inline double suboptimality_gap(const QStar& qstar, int s, int a) {
    if (s < 0 || s >= qstar.num_states || a < 0 || a >= qstar.num_actions)
        throw InvalidCall("suboptimality_gap: state/action out of range");
    return qstar.value(s) - qstar.at(s, a);
}

// Fixed point of the n-step backup under a fixed behavior policy:
//   T_n Q(s,a) = E_pi[ sum_{u<n} gamma^u r_u + gamma^n max_a' Q(s_n, a') | s_0=s, a_0=a ]
// with a_1..a_{n-1} drawn from the behavior. The expectation is expanded
// exactly through the behavior-induced chain, not sampled. For n=1 this is the
// Bellman optimality operator, so the fixed point equals Q*.
inline std::vector<double> nstep_fixed_point(const MDPSpec& mdp, const BehaviorPolicy& behavior, int n,
                                             double tol = kOracleTol) {
    if (n < 1) throw InvalidCall("nstep_fixed_point: n must be >= 1");
    const int S = mdp.num_states, A = mdp.num_actions;
    const std::vector<double> P_pi = behavior_transition_matrix(mdp, behavior);

    // Expected one-step behavior reward per state.
    std::vector<double> r_pi(S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) r_pi[s] += behavior.prob(s, a) * mdp.rew(s, a);

    // Per (s, a): state distribution after u steps (first action forced, then
    // behavior) and accumulated expected discounted rewards for u < n.
    // Precomputed once; the operator iteration then only needs max-Q sweeps.
    std::vector<double> reward_part(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> dist_n(static_cast<std::size_t>(S) * A * S, 0.0);
    std::vector<double> d(S), dn(S);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double expected = mdp.rew(s, a);
            for (int s2 = 0; s2 < S; ++s2) d[s2] = mdp.trans(s, a, s2);
            double disc = mdp.gamma;
            for (int u = 1; u < n; ++u) {
                double er = 0.0;
                for (int s2 = 0; s2 < S; ++s2) er += d[s2] * r_pi[s2];
                expected += disc * er;
                std::fill(dn.begin(), dn.end(), 0.0);
                for (int s2 = 0; s2 < S; ++s2) {
                    if (d[s2] == 0.0) continue;
                    for (int s3 = 0; s3 < S; ++s3)
                        dn[s3] += d[s2] * P_pi[static_cast<std::size_t>(s2) * S + s3];
                }
                d.swap(dn);
                disc *= mdp.gamma;
            }
            reward_part[static_cast<std::size_t>(s) * A + a] = expected;
            std::copy(d.begin(), d.end(), dist_n.begin() + (static_cast<std::size_t>(s) * A + a) * S);
        }
    }

    const double gamma_n = std::pow(mdp.gamma, n);
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0), next(q.size(), 0.0), vmax(S, 0.0);
    const double stop = (gamma_n > 0.0 && gamma_n < 1.0) ? tol * (1.0 - gamma_n) / gamma_n : tol;
    const int max_iters = 1'000'000;
    for (int it = 0; it < max_iters; ++it) {
        for (int s = 0; s < S; ++s) {
            double best = q[static_cast<std::size_t>(s) * A];
            for (int a = 1; a < A; ++a) best = std::max(best, q[static_cast<std::size_t>(s) * A + a]);
            vmax[s] = best;
        }
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const double* dist = dist_n.data() + (static_cast<std::size_t>(s) * A + a) * S;
                double acc = 0.0;
                for (int s2 = 0; s2 < S; ++s2) acc += dist[s2] * vmax[s2];
                next[static_cast<std::size_t>(s) * A + a] =
                    reward_part[static_cast<std::size_t>(s) * A + a] + gamma_n * acc;
            }
        const double diff = detail::sup_diff(q, next);
        q.swap(next);
        if (diff <= stop) break;
    }
    return q;
}

inline void write_qtable_csv(std::ostream& os, const std::vector<double>& q, int num_states,
                             int num_actions) {
    os << "s,a,q\n";
    char buf[64];
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
            std::snprintf(buf, sizeof(buf), "%.17g", q[static_cast<std::size_t>(s) * num_actions + a]);
            os << s << ',' << a << ',' << buf << '\n';
        }
}

}  // namespace lql

#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "lql/mdp.hpp"
#include "lql/oracle.hpp"
#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Horizon-independent constants from the declared reward bound:
//   q_max = r_max / (1 - gamma)
//   m     = r_max + (1+gamma) q_max + 2 q_max   (per-step magnitude bound)
//   v_inf = (m / (1 - gamma))^2                 (variance bound, any L)
// ---------------------------------------------------------------------------
struct TheoryConstants {
    double r_max = 0.0;
    double gamma = 0.0;
    double q_max = 0.0;
    double m = 0.0;
    double v_inf = 0.0;

    static TheoryConstants from(double r_max, double gamma) {
        if (r_max < 0.0 || gamma < 0.0 || gamma >= 1.0)
            throw InvalidInput("TheoryConstants: need r_max >= 0 and gamma in [0,1)");
        TheoryConstants c;
        c.r_max = r_max;
        c.gamma = gamma;
        c.q_max = r_max / (1.0 - gamma);
        c.m = r_max + (1.0 + gamma) * c.q_max + 2.0 * c.q_max;
        c.v_inf = sqr(c.m / (1.0 - gamma));
        return c;
    }

    static TheoryConstants from(const MDPSpec& mdp) { return from(mdp.r_max, mdp.gamma); }
};

// One-step Bellman noise: eps = r + gamma * V*(s') - Q*(s, a). Zero conditional
// mean given (s, a) by the Bellman equation; identically zero when the MDP is
// deterministic.
inline double bellman_noise(const MDPSpec& mdp, const QStar& qstar, int s, int a, int s_next, double r) {
    if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions || s_next < 0 ||
        s_next >= mdp.num_states)
        throw InvalidInput("bellman_noise: index out of range");
    if (mdp.trans(s, a, s_next) <= 0.0) throw InvalidInput("bellman_noise: unsupported (s,a,s') triple");
    const double v_next = mdp.is_terminal(s_next) ? 0.0 : qstar.value(s_next);
    return r + mdp.gamma * v_next - qstar.at(s, a);
}

// A rolled trajectory for theory evaluation. Stepping continues through
// absorbing terminal states (self-loop, reward 0), so signals of any length
// are defined pathwise.
struct TheoryTrajectory {
    std::vector<int> states;    // length n+1
    std::vector<int> actions;   // length n+1 (action logged at every state)
    std::vector<double> rewards;  // length n (reward of (s_t, a_t))
};

// L-step LB violation signal at position i:
//   Z_L = G_{i:i+L} + gamma^L * Q*(s_{i+L}, a*(s_{i+L})) - Q*(s_i, a_i)
inline double lb_violation_signal(const TheoryTrajectory& traj, const MDPSpec& mdp, const QStar& qstar,
                                  int i, int L) {
    if (L < 1 || i < 0 || i + L >= static_cast<int>(traj.states.size()) ||
        i + L > static_cast<int>(traj.rewards.size()))
        throw InvalidIndices("lb_violation_signal: need i + L within the trajectory");
    double g = 0.0, disc = 1.0;
    for (int k = 0; k < L; ++k) {
        g += disc * traj.rewards[i + k];
        disc *= mdp.gamma;
    }
    const int s_end = traj.states[i + L];
    const double boot = mdp.is_terminal(s_end) ? 0.0 : qstar.value(s_end);
    return g + disc * boot - qstar.at(traj.states[i], traj.actions[i]);
}

// L-step UB violation signal at position i:
//   U_L = G_{i:i+L} + gamma^L * Q*(s_{i+L}, a_{i+L}) - Q*(s_i, a*(s_i))
// The logged action at position i+L must exist.
inline double ub_violation_signal(const TheoryTrajectory& traj, const MDPSpec& mdp, const QStar& qstar,
                                  int i, int L) {
    if (L < 0 || i < 0 || i + L >= static_cast<int>(traj.actions.size()) ||
        i + L > static_cast<int>(traj.rewards.size()))
        throw InvalidIndices("ub_violation_signal: need a logged action at i + L");
    double g = 0.0, disc = 1.0;
    for (int k = 0; k < L; ++k) {
        g += disc * traj.rewards[i + k];
        disc *= mdp.gamma;
    }
    return g + disc * qstar.at(traj.states[i + L], traj.actions[i + L]) - qstar.value(traj.states[i]);
}

// Cantelli probability bound: for E[X] = -mu (mu >= 0), Var(X) <= v,
//   Pr(X > 0) <= v / (v + mu^2).
inline double cantelli_prob_bound(double v, double mu) {
    if (v <= 0.0) throw InvalidInput("cantelli_prob_bound: v must be positive");
    if (mu < 0.0) throw InvalidInput("cantelli_prob_bound: mu must be >= 0");
    return v / (v + mu * mu);
}

// Hinge-expectation companion: E[[X]_+] <= v / (2 (sqrt(v + mu^2) + mu)).
inline double cantelli_hinge_bound(double v, double mu) {
    if (v <= 0.0) throw InvalidInput("cantelli_hinge_bound: v must be positive");
    if (mu < 0.0) throw InvalidInput("cantelli_hinge_bound: mu must be >= 0");
    return v / (2.0 * (std::sqrt(v + mu * mu) + mu));
}

enum class PenaltySide { LB, UB };

inline std::string to_string(PenaltySide s) { return s == PenaltySide::LB ? "LB" : "UB"; }

// Closed-form false-penalty bounds. The LB side enters Cantelli with
// mu = gamma * delta_bar (the gap sum starts one step in); the UB side uses
// mu = delta_bar directly. Both are independent of L:
//   prob_bound = v_inf / (v_inf + mu^2)
//   sq_bound   = v_inf^{3/2} / (2 (sqrt(v_inf + mu^2) + mu))
inline std::pair<double, double> false_penalty_bounds(const TheoryConstants& c, double delta_bar,
                                                      PenaltySide side) {
    if (delta_bar < 0.0) throw InvalidInput("false_penalty_bounds: delta_bar must be >= 0");
    const double mu = side == PenaltySide::LB ? c.gamma * delta_bar : delta_bar;
    const double prob = cantelli_prob_bound(c.v_inf, mu);
    const double sq = std::sqrt(c.v_inf) * cantelli_hinge_bound(c.v_inf, mu);
    return {prob, sq};
}

// ---------------------------------------------------------------------------
// Exact expectations under the behavior occupancy
// ---------------------------------------------------------------------------

// E[Delta(s, a)] with s drawn from `dist` and a from the behavior at s.
inline double expected_gap(const MDPSpec& mdp, const BehaviorPolicy& pi, const QStar& qstar,
                           const std::vector<double>& dist) {
    double acc = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
        if (dist[s] == 0.0) continue;
        for (int a = 0; a < mdp.num_actions; ++a)
            acc += dist[s] * pi.prob(s, a) * suboptimality_gap(qstar, s, a);
    }
    return acc;
}

// delta_bar for the chosen side when position i is drawn from the behavior
// occupancy after `burn_in` steps:
//   LB: E[Delta_{i+1}] (occupancy at burn_in + 1), UB: E[Delta_i].
inline double exact_delta_bar(const MDPSpec& mdp, const BehaviorPolicy& pi, const QStar& qstar,
                              PenaltySide side, int burn_in) {
    const int horizon = side == PenaltySide::LB ? burn_in + 1 : burn_in;
    const std::vector<double> d = occupancy_after(mdp, pi, mdp.start, horizon);
    return expected_gap(mdp, pi, qstar, d);
}

// Exact mean of the violation signals:
//   mu_D(L) = sum_{j=1}^{L-1} gamma^j E[Delta_{i+j}]   (E[Z_L] = -mu_D)
//   mu_U(L) = sum_{k=0}^{L}   gamma^k E[Delta_{i+k}]   (E[U_L] = -mu_U)
inline double exact_mu(const MDPSpec& mdp, const BehaviorPolicy& pi, const QStar& qstar,
                       PenaltySide side, int burn_in, int L) {
    double acc = 0.0;
    const int lo = side == PenaltySide::LB ? 1 : 0;
    const int hi = side == PenaltySide::LB ? L - 1 : L;
    std::vector<double> d = occupancy_after(mdp, pi, mdp.start, burn_in + lo);
    for (int j = lo; j <= hi; ++j) {
        acc += std::pow(mdp.gamma, j) * expected_gap(mdp, pi, qstar, d);
        if (j < hi) d = occupancy_after(mdp, pi, d, 1);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Monte-Carlo estimation of false penalties at Q = Q*
// ---------------------------------------------------------------------------
struct FalsePenaltyEstimate {
    PenaltySide side = PenaltySide::LB;
    int L = 0;
    std::int64_t trials = 0;
    double prob_violation = 0.0;
    double prob_se = 0.0;
    double mean_sq_penalty = 0.0;
    double sq_se = 0.0;
    double mean_signal = 0.0;  // empirical E[Z_L] (resp. E[U_L])
    double signal_se = 0.0;
    double delta_bar = 0.0;
    double prob_bound = 0.0;
    double sq_bound = 0.0;
};

// Roll one behavior trajectory of `steps` transitions from `s0`, continuing
// through absorbing terminals (self-loop, reward 0; Q* there is 0, so every
// telescoped quantity stays exact pathwise).
inline TheoryTrajectory roll_theory_trajectory(const MDPSpec& mdp, const BehaviorPolicy& pi, int s0,
                                               int steps, Rng& rng) {
    TheoryTrajectory t;
    t.states.reserve(steps + 1);
    t.actions.reserve(steps + 1);
    t.rewards.reserve(steps);
    int s = s0;
    for (int k = 0; k <= steps; ++k) {
        t.states.push_back(s);
        const int a = pi.sample(s, rng);
        t.actions.push_back(a);
        if (k == steps) break;
        if (mdp.is_terminal(s)) {
            t.rewards.push_back(0.0);
            continue;  // absorbing self-loop
        }
        const StepResult res = step(mdp, s, a, rng);
        t.rewards.push_back(res.r);
        s = res.s_next;
    }
    return t;
}

// Estimate per-side false penalties over `trials` trajectories with position
// i at the burn-in occupancy, one estimate per requested L (all Ls share the
// same trajectories). Per-trial seeds are derived from (seed, trial), so the
// estimate does not depend on evaluation order.
inline std::vector<FalsePenaltyEstimate> monte_carlo_false_penalty(
    const MDPSpec& mdp, const BehaviorPolicy& pi, const QStar& qstar, const std::vector<int>& Ls,
    std::int64_t trials, std::uint64_t seed, int burn_in = 8) {
    if (trials < 1) throw InvalidCall("monte_carlo_false_penalty: trials must be >= 1");
    if (Ls.empty()) throw InvalidCall("monte_carlo_false_penalty: need at least one L");
    int l_max = 0;
    for (int L : Ls) {
        if (L < 1) throw InvalidCall("monte_carlo_false_penalty: L must be >= 1");
        l_max = std::max(l_max, L);
    }
    const TheoryConstants consts = TheoryConstants::from(mdp);

    struct Accum {
        double viol_sum = 0, viol_sq = 0, sq_sum = 0, sq_sq = 0, sig_sum = 0, sig_sq = 0;
    };
    std::vector<Accum> lb_acc(Ls.size()), ub_acc(Ls.size());

    for (std::int64_t trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
        const int s0 = sample_start(mdp, rng);
        const TheoryTrajectory traj = roll_theory_trajectory(mdp, pi, s0, burn_in + l_max, rng);
        for (std::size_t li = 0; li < Ls.size(); ++li) {
            const int L = Ls[li];
            const double z = lb_violation_signal(traj, mdp, qstar, burn_in, L);
            const double u = ub_violation_signal(traj, mdp, qstar, burn_in, L);
            const double zv = z > 0.0 ? 1.0 : 0.0;
            const double zs = sqr(pos(z));
            lb_acc[li].viol_sum += zv;
            lb_acc[li].viol_sq += zv * zv;
            lb_acc[li].sq_sum += zs;
            lb_acc[li].sq_sq += zs * zs;
            lb_acc[li].sig_sum += z;
            lb_acc[li].sig_sq += z * z;
            const double uv = u > 0.0 ? 1.0 : 0.0;
            const double us = sqr(pos(u));
            ub_acc[li].viol_sum += uv;
            ub_acc[li].viol_sq += uv * uv;
            ub_acc[li].sq_sum += us;
            ub_acc[li].sq_sq += us * us;
            ub_acc[li].sig_sum += u;
            ub_acc[li].sig_sq += u * u;
        }
    }

    auto finalize = [&](PenaltySide side, int L, const Accum& a) {
        FalsePenaltyEstimate e;
        e.side = side;
        e.L = L;
        e.trials = trials;
        const double n = static_cast<double>(trials);
        auto mean_se = [&](double sum, double sum_sq, double& mean, double& se) {
            mean = sum / n;
            const double var = std::max(0.0, sum_sq / n - mean * mean);
            se = std::sqrt(var / n);
        };
        mean_se(a.viol_sum, a.viol_sq, e.prob_violation, e.prob_se);
        mean_se(a.sq_sum, a.sq_sq, e.mean_sq_penalty, e.sq_se);
        mean_se(a.sig_sum, a.sig_sq, e.mean_signal, e.signal_se);
        e.delta_bar = exact_delta_bar(mdp, pi, qstar, side, burn_in);
        const auto [pb, sb] = false_penalty_bounds(consts, e.delta_bar, side);
        e.prob_bound = pb;
        e.sq_bound = sb;
        return e;
    };

    std::vector<FalsePenaltyEstimate> out;
    for (std::size_t li = 0; li < Ls.size(); ++li) out.push_back(finalize(PenaltySide::LB, Ls[li], lb_acc[li]));
    for (std::size_t li = 0; li < Ls.size(); ++li) out.push_back(finalize(PenaltySide::UB, Ls[li], ub_acc[li]));
    return out;
}

struct TheoryReportRow {
    FalsePenaltyEstimate est;
    double gamma = 0.0;
    double sigma = 0.0;
};

inline void write_theory_csv(std::ostream& os, const std::vector<TheoryReportRow>& rows) {
    os << "side,L,gamma,sigma,trials,prob_est,prob_se,prob_bound,sq_est,sq_se,sq_bound,delta_bar\n";
    char buf[512];
    for (const TheoryReportRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      to_string(r.est.side).c_str(), r.est.L, r.gamma, r.sigma,
                      static_cast<long long>(r.est.trials), r.est.prob_violation, r.est.prob_se,
                      r.est.prob_bound, r.est.mean_sq_penalty, r.est.sq_se, r.est.sq_bound,
                      r.est.delta_bar);
        os << buf << '\n';
    }
}

}  // namespace lql

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Finite discrete MDP (S, A, P, R, gamma) with absorbing terminal states.
//
// Conventions:
//   - transition is a dense (s, a, s') tensor, rows summing to 1;
//   - reward is a deterministic (s, a) table bounded by r_max;
//   - terminal states self-loop with reward 0, so value functions of the
//     episodic task agree with the infinite-horizon task on the same tensor;
//   - start is a distribution over non-terminal states used for rollouts.
// ---------------------------------------------------------------------------
struct MDPSpec {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition;  // (s * A + a) * S + s'
    std::vector<double> reward;      // s * A + a
    std::vector<std::uint8_t> terminal;
    std::vector<double> start;  // start-state distribution
    double gamma = 0.99;
    double r_max = 1.0;

    double trans(int s, int a, int s2) const {
        return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
    }
    double& trans(int s, int a, int s2) {
        return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + s2];
    }
    double rew(int s, int a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
    double& rew(int s, int a) { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
    bool is_terminal(int s) const { return terminal[s] != 0; }

    // Row view (s, a, ·) into the transition tensor.
    const double* row(int s, int a) const {
        return transition.data() + (static_cast<std::size_t>(s) * num_actions + a) * num_states;
    }
};

inline void validate_spec(const MDPSpec& m) {
    const int S = m.num_states, A = m.num_actions;
    if (S < 1 || A < 1) throw InvalidSpec("need at least one state and action");
    if (m.gamma < 0.0 || m.gamma >= 1.0) throw InvalidSpec("gamma must lie in [0,1)");
    if (m.r_max < 0.0) throw InvalidSpec("r_max must be >= 0");
    if (m.transition.size() != static_cast<std::size_t>(S) * A * S ||
        m.reward.size() != static_cast<std::size_t>(S) * A ||
        m.terminal.size() != static_cast<std::size_t>(S) || m.start.size() != static_cast<std::size_t>(S))
        throw InvalidSpec("field shapes inconsistent with num_states/num_actions");
    double start_sum = 0.0;
    for (int s = 0; s < S; ++s) start_sum += m.start[s];
    if (std::abs(start_sum - 1.0) > 1e-9) throw InvalidSpec("start distribution must sum to 1");
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                const double p = m.trans(s, a, s2);
                if (p < 0.0) throw InvalidSpec("negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw InvalidSpec("transition row does not sum to 1");
            if (std::abs(m.rew(s, a)) > m.r_max + 1e-12) throw InvalidSpec("reward exceeds declared r_max");
            if (m.is_terminal(s)) {
                if (m.trans(s, a, s) != 1.0) throw InvalidSpec("terminal state must self-loop");
                if (m.rew(s, a) != 0.0) throw InvalidSpec("terminal reward must be 0");
            }
        }
    }
}

enum class RewardMode { GoalPlusOne, StepMinusOne };

inline RewardMode reward_mode_from_string(const std::string& s) {
    if (s == "goal-plus-one") return RewardMode::GoalPlusOne;
    if (s == "step-minus-one") return RewardMode::StepMinusOne;
    throw InvalidConfig("unknown reward mode: " + s);
}

inline std::string to_string(RewardMode m) {
    return m == RewardMode::GoalPlusOne ? "goal-plus-one" : "step-minus-one";
}

// Chain actions; `forward` moves toward the terminal goal at the far end,
// `back` moves away (clamped at state 0). Greedy ties resolve to the lowest
// action id, so `back` deliberately comes first: an untrained all-zero
// Q-function must not solve chain tasks by tie-breaking alone.
inline constexpr int kChainBack = 0;
inline constexpr int kChainForward = 1;

// Linear chain of `length` states; terminal at the far end.
// goal-plus-one: +1 on the forward step entering the goal, 0 elsewhere.
// step-minus-one: -1 on every non-terminal step (rewards in {-1, 0}).
inline MDPSpec build_chain(int length, RewardMode mode, double gamma) {
    if (length < 2) throw InvalidSpec("build_chain: length must be >= 2");
    MDPSpec m;
    m.num_states = length;
    m.num_actions = 2;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(length) * 2 * length, 0.0);
    m.reward.assign(static_cast<std::size_t>(length) * 2, 0.0);
    m.terminal.assign(length, 0);
    m.terminal[length - 1] = 1;
    m.start.assign(length, 0.0);
    m.start[0] = 1.0;
    const int goal = length - 1;
    for (int s = 0; s < length; ++s) {
        if (m.is_terminal(s)) {
            m.trans(s, kChainBack, s) = 1.0;
            m.trans(s, kChainForward, s) = 1.0;
            continue;
        }
        const int fwd = std::min(s + 1, goal);
        const int bwd = std::max(s - 1, 0);
        m.trans(s, kChainForward, fwd) = 1.0;
        m.trans(s, kChainBack, bwd) = 1.0;
        if (mode == RewardMode::GoalPlusOne) {
            if (fwd == goal) m.rew(s, kChainForward) = 1.0;
        } else {
            m.rew(s, kChainForward) = -1.0;
            m.rew(s, kChainBack) = -1.0;
        }
    }
    validate_spec(m);
    return m;
}

// Grid actions, row 0 at the top: 0=up, 1=right, 2=down, 3=left.
inline constexpr int kGridRowDelta[4] = {-1, 0, 1, 0};
inline constexpr int kGridColDelta[4] = {0, 1, 0, -1};

// 4-action gridworld from an ASCII layout: '#' wall, '.' free, 'S' start,
// 'G' goal. Bumping a wall (or the border) stays in place. The goal cell is
// terminal. Wall cells are not states.
inline MDPSpec build_gridmaze(const std::vector<std::string>& layout, RewardMode mode, double gamma) {
    if (layout.empty()) throw InvalidSpec("build_gridmaze: empty layout");
    const int rows = static_cast<int>(layout.size());
    const int cols = static_cast<int>(layout[0].size());
    for (const auto& line : layout)
        if (static_cast<int>(line.size()) != cols) throw InvalidSpec("build_gridmaze: layout must be rectangular");

    std::vector<int> cell_state(static_cast<std::size_t>(rows) * cols, -1);
    int start_cell = -1, goal_cell = -1, S = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const char ch = layout[r][c];
            if (ch == '#') continue;
            if (ch != '.' && ch != 'S' && ch != 'G')
                throw InvalidSpec(std::string("build_gridmaze: unknown cell '") + ch + "'");
            const int idx = r * cols + c;
            cell_state[idx] = S++;
            if (ch == 'S') {
                if (start_cell >= 0) throw InvalidSpec("build_gridmaze: multiple starts");
                start_cell = idx;
            }
            if (ch == 'G') {
                if (goal_cell >= 0) throw InvalidSpec("build_gridmaze: multiple goals");
                goal_cell = idx;
            }
        }
    }
    if (start_cell < 0 || goal_cell < 0) throw InvalidSpec("build_gridmaze: need exactly one S and one G");

    // Goal must be reachable from the start through free cells.
    {
        std::vector<std::uint8_t> seen(static_cast<std::size_t>(rows) * cols, 0);
        std::queue<int> q;
        q.push(start_cell);
        seen[start_cell] = 1;
        bool reached = false;
        while (!q.empty()) {
            const int cur = q.front();
            q.pop();
            if (cur == goal_cell) {
                reached = true;
                break;
            }
            const int r = cur / cols, c = cur % cols;
            for (int a = 0; a < 4; ++a) {
                const int nr = r + kGridRowDelta[a], nc = c + kGridColDelta[a];
                if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                const int nidx = nr * cols + nc;
                if (cell_state[nidx] < 0 || seen[nidx]) continue;
                seen[nidx] = 1;
                q.push(nidx);
            }
        }
        if (!reached) throw InvalidSpec("build_gridmaze: goal unreachable from start");
    }

    MDPSpec m;
    m.num_states = S;
    m.num_actions = 4;
    m.gamma = gamma;
    m.r_max = 1.0;
    m.transition.assign(static_cast<std::size_t>(S) * 4 * S, 0.0);
    m.reward.assign(static_cast<std::size_t>(S) * 4, 0.0);
    m.terminal.assign(S, 0);
    m.start.assign(S, 0.0);
    const int goal_state = cell_state[goal_cell];
    m.terminal[goal_state] = 1;
    m.start[cell_state[start_cell]] = 1.0;

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int idx = r * cols + c;
            const int s = cell_state[idx];
            if (s < 0) continue;
            if (s == goal_state) {
                for (int a = 0; a < 4; ++a) m.trans(s, a, s) = 1.0;
                continue;
            }
            for (int a = 0; a < 4; ++a) {
                const int nr = r + kGridRowDelta[a], nc = c + kGridColDelta[a];
                int next = s;  // bump: stay in place
                if (nr >= 0 && nr < rows && nc >= 0 && nc < cols && cell_state[nr * cols + nc] >= 0)
                    next = cell_state[nr * cols + nc];
                m.trans(s, a, next) = 1.0;
                if (mode == RewardMode::GoalPlusOne) {
                    if (next == goal_state) m.rew(s, a) = 1.0;
                } else {
                    m.rew(s, a) = -1.0;
                }
            }
        }
    }
    validate_spec(m);
    return m;
}

// Discrete action-noise analog: with probability sigma the executed action is
// replaced by a uniformly random one, i.e. each transition row becomes
// (1-sigma) * pure + sigma * mean-over-actions. The reward table is tied to
// the intended action and left unchanged. sigma = 0 returns an identical spec.
inline MDPSpec apply_slip_noise(const MDPSpec& mdp, double sigma) {
    if (sigma < 0.0 || sigma > 1.0) throw InvalidSpec("apply_slip_noise: sigma must lie in [0,1]");
    MDPSpec out = mdp;
    if (sigma == 0.0) return out;
    const int S = mdp.num_states, A = mdp.num_actions;
    for (int s = 0; s < S; ++s) {
        if (mdp.is_terminal(s)) continue;  // absorbing rows stay exact
        std::vector<double> mean(S, 0.0);
        for (int a = 0; a < A; ++a)
            for (int s2 = 0; s2 < S; ++s2) mean[s2] += mdp.trans(s, a, s2) / A;
        for (int a = 0; a < A; ++a)
            for (int s2 = 0; s2 < S; ++s2)
                out.trans(s, a, s2) = (1.0 - sigma) * mdp.trans(s, a, s2) + sigma * mean[s2];
    }
    validate_spec(out);
    return out;
}

// Replace the start distribution with uniform over non-terminal states.
// Used to collect exploratory datasets with full state coverage.
inline MDPSpec with_uniform_starts(const MDPSpec& mdp) {
    MDPSpec out = mdp;
    int n = 0;
    for (int s = 0; s < mdp.num_states; ++s)
        if (!mdp.is_terminal(s)) ++n;
    if (n == 0) throw InvalidSpec("with_uniform_starts: no non-terminal states");
    out.start.assign(mdp.num_states, 0.0);
    for (int s = 0; s < mdp.num_states; ++s)
        if (!mdp.is_terminal(s)) out.start[s] = 1.0 / n;
    return out;
}

// ---------------------------------------------------------------------------
// Behavior policies for dataset generation
// ---------------------------------------------------------------------------
struct BehaviorPolicy {
    enum class Kind { Uniform, EpsilonGreedy, FixedTable };

    Kind kind = Kind::Uniform;
    int num_states = 0;
    int num_actions = 0;
    double epsilon = 0.0;
    std::vector<double> q_ref;  // (s, a) reference table for epsilon-greedy
    std::vector<double> table;  // (s, a) action probabilities for fixed-table

    static BehaviorPolicy uniform(int num_states, int num_actions) {
        BehaviorPolicy p;
        p.kind = Kind::Uniform;
        p.num_states = num_states;
        p.num_actions = num_actions;
        return p;
    }

    static BehaviorPolicy epsilon_greedy(std::vector<double> q_ref, int num_states, int num_actions,
                                         double epsilon) {
        if (epsilon < 0.0 || epsilon > 1.0) throw InvalidSpec("epsilon must lie in [0,1]");
        if (q_ref.size() != static_cast<std::size_t>(num_states) * num_actions)
            throw InvalidSpec("epsilon_greedy: q_ref shape mismatch");
        BehaviorPolicy p;
        p.kind = Kind::EpsilonGreedy;
        p.num_states = num_states;
        p.num_actions = num_actions;
        p.epsilon = epsilon;
        p.q_ref = std::move(q_ref);
        return p;
    }

    static BehaviorPolicy fixed_table(std::vector<double> probs, int num_states, int num_actions) {
        if (probs.size() != static_cast<std::size_t>(num_states) * num_actions)
            throw InvalidSpec("fixed_table: shape mismatch");
        for (int s = 0; s < num_states; ++s) {
            double sum = 0.0;
            for (int a = 0; a < num_actions; ++a) {
                const double p = probs[static_cast<std::size_t>(s) * num_actions + a];
                if (p < 0.0) throw InvalidSpec("fixed_table: negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) throw InvalidSpec("fixed_table: row does not sum to 1");
        }
        BehaviorPolicy p;
        p.kind = Kind::FixedTable;
        p.num_states = num_states;
        p.num_actions = num_actions;
        p.table = std::move(probs);
        return p;
    }

    int greedy_ref_action(int s) const {
        int best = 0;
        double best_q = q_ref[static_cast<std::size_t>(s) * num_actions];
        for (int a = 1; a < num_actions; ++a) {
            const double q = q_ref[static_cast<std::size_t>(s) * num_actions + a];
            if (q > best_q) {
                best_q = q;
                best = a;
            }
        }
        return best;
    }

    double prob(int s, int a) const {
        switch (kind) {
            case Kind::Uniform:
                return 1.0 / num_actions;
            case Kind::EpsilonGreedy: {
                const double base = epsilon / num_actions;
                return a == greedy_ref_action(s) ? base + (1.0 - epsilon) : base;
            }
            case Kind::FixedTable:
                return table[static_cast<std::size_t>(s) * num_actions + a];
        }
        return 0.0;
    }

    int sample(int s, Rng& rng) const {
        switch (kind) {
            case Kind::Uniform:
                return static_cast<int>(uniform_index(rng, num_actions));
            case Kind::EpsilonGreedy:
                if (uniform01(rng) < epsilon) return static_cast<int>(uniform_index(rng, num_actions));
                return greedy_ref_action(s);
            case Kind::FixedTable: {
                std::vector<double> row(table.begin() + static_cast<std::size_t>(s) * num_actions,
                                        table.begin() + static_cast<std::size_t>(s + 1) * num_actions);
                return static_cast<int>(sample_categorical(rng, row));
            }
        }
        return 0;
    }
};

// ---------------------------------------------------------------------------
// Environment stepping and logged transitions
// ---------------------------------------------------------------------------
struct Transition {
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s_next = 0;
    bool done = false;  // true iff s_next is terminal
    std::int64_t episode_id = 0;
    std::int64_t step_index = 0;
};

struct StepResult {
    int s_next;
    double r;
    bool done;
};

inline StepResult step(const MDPSpec& mdp, int s, int a, Rng& rng) {
    if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions)
        throw InvalidCall("step: state/action out of range");
    if (mdp.is_terminal(s)) throw InvalidCall("step: cannot step a terminal state");
    const double u = uniform01(rng);
    double acc = 0.0;
    int s_next = mdp.num_states - 1;
    for (int s2 = 0; s2 < mdp.num_states; ++s2) {
        acc += mdp.trans(s, a, s2);
        if (u < acc) {
            s_next = s2;
            break;
        }
    }
    return StepResult{s_next, mdp.rew(s, a), mdp.is_terminal(s_next)};
}

inline int sample_start(const MDPSpec& mdp, Rng& rng) {
    return static_cast<int>(sample_categorical(rng, mdp.start));
}

// Roll out episodes under `policy` until `num_transitions` are collected.
// Episodes truncate at max_episode_len with done=false (bootstrapping still
// applies at the cut); terminal arrivals record done=true.
inline std::vector<Transition> generate_dataset(const MDPSpec& mdp, const BehaviorPolicy& policy,
                                                std::int64_t num_transitions, int max_episode_len,
                                                Rng& rng) {
    if (num_transitions < 1) throw InvalidCall("generate_dataset: num_transitions must be >= 1");
    if (max_episode_len < 1) throw InvalidCall("generate_dataset: max_episode_len must be >= 1");
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(num_transitions));
    std::int64_t episode_id = 0;
    while (static_cast<std::int64_t>(out.size()) < num_transitions) {
        int s = sample_start(mdp, rng);
        for (int t = 0; t < max_episode_len && static_cast<std::int64_t>(out.size()) < num_transitions; ++t) {
            const int a = policy.sample(s, rng);
            const StepResult res = step(mdp, s, a, rng);
            out.push_back(Transition{s, a, res.r, res.s_next, res.done, episode_id, t});
            s = res.s_next;
            if (res.done) break;
        }
        ++episode_id;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Behavior-induced chain helpers (used by oracles and the theory module)
// ---------------------------------------------------------------------------

// P_pi(s' | s) = sum_a pi(a|s) P(s'|s,a), as a dense row-major S x S matrix.
inline std::vector<double> behavior_transition_matrix(const MDPSpec& mdp, const BehaviorPolicy& pi) {
    const int S = mdp.num_states, A = mdp.num_actions;
    std::vector<double> P(static_cast<std::size_t>(S) * S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double pa = pi.prob(s, a);
            if (pa == 0.0) continue;
            for (int s2 = 0; s2 < S; ++s2) P[static_cast<std::size_t>(s) * S + s2] += pa * mdp.trans(s, a, s2);
        }
    return P;
}

// Distribution over states after `horizon` behavior steps from `init`.
inline std::vector<double> occupancy_after(const MDPSpec& mdp, const BehaviorPolicy& pi,
                                           const std::vector<double>& init, int horizon) {
    const int S = mdp.num_states;
    const std::vector<double> P = behavior_transition_matrix(mdp, pi);
    std::vector<double> d = init, next(S, 0.0);
    for (int t = 0; t < horizon; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s) {
            if (d[s] == 0.0) continue;
            for (int s2 = 0; s2 < S; ++s2) next[s2] += d[s] * P[static_cast<std::size_t>(s) * S + s2];
        }
        d.swap(next);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Serialization: MDP specs as JSON documents, datasets as CSV
// ---------------------------------------------------------------------------

std::string mdp_to_json(const MDPSpec& mdp);          // defined in mdp_io.hpp
MDPSpec mdp_from_json(const std::string& text);       // defined in mdp_io.hpp

inline void write_dataset_csv(std::ostream& os, const std::vector<Transition>& data) {
    os << "episode_id,step_index,s,a,r,s_next,done\n";
    char buf[64];
    for (const Transition& t : data) {
        std::snprintf(buf, sizeof(buf), "%.17g", t.r);
        os << t.episode_id << ',' << t.step_index << ',' << t.s << ',' << t.a << ',' << buf << ','
           << t.s_next << ',' << (t.done ? 1 : 0) << '\n';
    }
}

inline std::vector<Transition> read_dataset_csv(std::istream& is) {
    std::vector<Transition> out;
    std::string line;
    if (!std::getline(is, line)) throw InvalidInput("dataset csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        Transition t;
        int done_int = 0;
        std::istringstream ss(line);
        char comma;
        if (!(ss >> t.episode_id >> comma >> t.step_index >> comma >> t.s >> comma >> t.a >> comma >>
              t.r >> comma >> t.s_next >> comma >> done_int))
            throw InvalidInput("dataset csv: malformed row: " + line);
        t.done = done_int != 0;
        out.push_back(t);
    }
    return out;
}

}  // namespace lql

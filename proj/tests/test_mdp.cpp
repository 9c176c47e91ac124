#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "helpers.hpp"
#include "lql/mdp.hpp"
#include "lql/mdp_io.hpp"
#include "lql/oracle.hpp"

using namespace lql;

TEST_CASE("build_chain: goal-plus-one values on the 2-state chain") {
    const MDPSpec m = build_chain(2, RewardMode::GoalPlusOne, 0.5);
    const auto q = testutil::vi_reference(m);
    CHECK(q[0 * 2 + kChainForward] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(q[0 * 2 + kChainBack] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("build_chain: step-minus-one forces non-positive optimal values") {
    const MDPSpec m = build_chain(2, RewardMode::StepMinusOne, 0.5);
    const auto q = testutil::vi_reference(m);
    for (double v : q) CHECK(v <= 1e-12);
}

TEST_CASE("build_chain: length below 2 is rejected") {
    CHECK_THROWS_AS(build_chain(1, RewardMode::GoalPlusOne, 0.9), InvalidSpec);
}

TEST_CASE("build_gridmaze: open 3x3 grid optimal values follow gamma^(d-1)") {
    const std::vector<std::string> layout = {"S..", "...", "..G"};
    const MDPSpec m = build_gridmaze(layout, RewardMode::GoalPlusOne, 0.9);
    const auto q = testutil::vi_reference(m);
    // Start is state 0 (row-major over free cells); Manhattan distance 4.
    const int d = 4;
    const double expect = std::pow(0.9, d - 1);
    // Both right (1) and down (2) start optimal paths.
    CHECK(q[0 * 4 + 1] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(q[0 * 4 + 2] == doctest::Approx(expect).epsilon(1e-9));
    // Stepping away (bump) wastes one step.
    CHECK(q[0 * 4 + 0] == doctest::Approx(0.9 * expect).epsilon(1e-9));
}

TEST_CASE("build_gridmaze: 1x2 grid collapses to the 2-state chain") {
    const MDPSpec maze = build_gridmaze({"SG"}, RewardMode::GoalPlusOne, 0.5);
    const MDPSpec chain = build_chain(2, RewardMode::GoalPlusOne, 0.5);
    const auto qm = testutil::vi_reference(maze);
    const auto qc = testutil::vi_reference(chain);
    // Maze action right (1) is the chain's forward; left (3) is back.
    CHECK(qm[0 * 4 + 1] == doctest::Approx(qc[0 * 2 + kChainForward]));
    CHECK(qm[0 * 4 + 3] == doctest::Approx(qc[0 * 2 + kChainBack]));
}

TEST_CASE("build_gridmaze: walled-off goal is rejected") {
    const std::vector<std::string> layout = {"S.#", "..#", "##G"};
    CHECK_THROWS_AS(build_gridmaze(layout, RewardMode::GoalPlusOne, 0.9), InvalidSpec);
}

TEST_CASE("apply_slip_noise: sigma=0 is the exact identity") {
    const MDPSpec m = build_chain(4, RewardMode::GoalPlusOne, 0.9);
    const MDPSpec n = apply_slip_noise(m, 0.0);
    CHECK(n.transition == m.transition);
    CHECK(n.reward == m.reward);
}

TEST_CASE("apply_slip_noise: sigma=1 with 2 actions mixes rows to their mean") {
    const MDPSpec m = build_chain(4, RewardMode::GoalPlusOne, 0.9);
    const MDPSpec n = apply_slip_noise(m, 1.0);
    for (int s = 0; s < m.num_states; ++s) {
        if (m.is_terminal(s)) continue;
        for (int s2 = 0; s2 < m.num_states; ++s2) {
            const double mean = 0.5 * (m.trans(s, 0, s2) + m.trans(s, 1, s2));
            CHECK(n.trans(s, 0, s2) == doctest::Approx(mean).epsilon(1e-12));
            CHECK(n.trans(s, 1, s2) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("apply_slip_noise: sigma=0.4 equals the direct convex combination") {
    const MDPSpec m = build_chain(5, RewardMode::StepMinusOne, 0.9);
    const MDPSpec n = apply_slip_noise(m, 0.4);
    for (int s = 0; s < m.num_states; ++s) {
        if (m.is_terminal(s)) continue;
        for (int a = 0; a < 2; ++a)
            for (int s2 = 0; s2 < m.num_states; ++s2) {
                const double uniform_mix = 0.5 * (m.trans(s, 0, s2) + m.trans(s, 1, s2));
                const double expect = 0.6 * m.trans(s, a, s2) + 0.4 * uniform_mix;
                CHECK(n.trans(s, a, s2) == doctest::Approx(expect).epsilon(1e-12));
            }
    }
    CHECK_THROWS_AS(apply_slip_noise(m, -0.1), InvalidSpec);
    CHECK_THROWS_AS(apply_slip_noise(m, 1.1), InvalidSpec);
}

TEST_CASE("step: deterministic rows, terminal rejection, seeded determinism") {
    const MDPSpec m = build_chain(3, RewardMode::GoalPlusOne, 0.9);
    Rng rng(7);
    const StepResult r = step(m, 0, kChainForward, rng);
    CHECK(r.s_next == 1);
    CHECK(r.r == 0.0);
    CHECK_FALSE(r.done);
    const StepResult r2 = step(m, 1, kChainForward, rng);
    CHECK(r2.s_next == 2);
    CHECK(r2.r == 1.0);
    CHECK(r2.done);
    CHECK_THROWS_AS(step(m, 2, 0, rng), InvalidCall);

    // Same seed, same sequence.
    const MDPSpec slip = apply_slip_noise(m, 0.5);
    Rng a(123), b(123);
    for (int i = 0; i < 200; ++i) {
        const StepResult ra = step(slip, 0, kChainForward, a);
        const StepResult rb = step(slip, 0, kChainForward, b);
        CHECK(ra.s_next == rb.s_next);
    }
}

TEST_CASE("step: sigma=1 empirical next-state frequency matches the mixed row") {
    const MDPSpec m = apply_slip_noise(build_chain(3, RewardMode::GoalPlusOne, 0.9), 1.0);
    Rng rng(99);
    const int n = 100000;
    std::vector<int> counts(m.num_states, 0);
    for (int i = 0; i < n; ++i) counts[step(m, 1, kChainForward, rng).s_next]++;
    for (int s2 = 0; s2 < m.num_states; ++s2) {
        const double p = m.trans(1, kChainForward, s2);
        const double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(static_cast<double>(counts[s2]) / n - p) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("generate_dataset: transitions are supported by the spec") {
    const MDPSpec m = build_chain(2, RewardMode::GoalPlusOne, 0.5);
    Rng rng(3);
    const auto data = generate_dataset(m, BehaviorPolicy::uniform(2, 2), 100, 50, rng);
    CHECK(data.size() == 100);
    for (const Transition& t : data) {
        CHECK(m.trans(t.s, t.a, t.s_next) > 0.0);
        CHECK(t.r == m.rew(t.s, t.a));
        CHECK(t.done == m.is_terminal(t.s_next));
    }
}

TEST_CASE("generate_dataset: epsilon=0 greedy behavior logs only greedy actions") {
    const MDPSpec m = build_chain(4, RewardMode::GoalPlusOne, 0.9);
    const QStar qs = value_iteration(m);
    const BehaviorPolicy pi = BehaviorPolicy::epsilon_greedy(qs.q, m.num_states, m.num_actions, 0.0);
    Rng rng(11);
    const auto data = generate_dataset(m, pi, 200, 100, rng);
    for (const Transition& t : data) CHECK(t.a == qs.greedy(t.s));
}

TEST_CASE("generate_dataset: visit frequencies match restart-chain occupancy") {
    // Uniform behavior on a deterministic 4-chain; episodes restart at the
    // terminal. The exact visit law over logged states is the stationary
    // distribution of the restart chain, computed here by power iteration.
    const MDPSpec m = build_chain(4, RewardMode::GoalPlusOne, 0.9);
    const BehaviorPolicy pi = BehaviorPolicy::uniform(4, 2);
    const int S = m.num_states;

    const auto P = behavior_transition_matrix(m, pi);
    std::vector<double> restart(static_cast<std::size_t>(S) * S, 0.0);
    for (int s = 0; s < S; ++s) {
        if (m.is_terminal(s)) continue;
        for (int s2 = 0; s2 < S; ++s2) {
            const double p = P[static_cast<std::size_t>(s) * S + s2];
            if (m.is_terminal(s2))
                restart[static_cast<std::size_t>(s) * S + 0] += p;  // reset to start
            else
                restart[static_cast<std::size_t>(s) * S + s2] += p;
        }
    }
    std::vector<double> d(S, 0.0), dn(S, 0.0);
    d[0] = 1.0;
    for (int it = 0; it < 20000; ++it) {
        std::fill(dn.begin(), dn.end(), 0.0);
        for (int s = 0; s < S; ++s)
            for (int s2 = 0; s2 < S; ++s2) dn[s2] += d[s] * restart[static_cast<std::size_t>(s) * S + s2];
        d.swap(dn);
    }

    Rng rng(2024);
    const std::int64_t n = 100000;
    const auto data = generate_dataset(m, pi, n, 1000000, rng);

    // Block by episode so the standard error is honest under correlation.
    std::map<std::int64_t, std::vector<int>> per_episode;
    for (const Transition& t : data) {
        auto& v = per_episode[t.episode_id];
        v.resize(S, 0);
        v[t.s]++;
    }
    std::map<std::int64_t, int> ep_sizes;
    for (const Transition& t : data) ep_sizes[t.episode_id]++;

    for (int s = 0; s < S - 1; ++s) {
        const double freq = [&] {
            std::int64_t c = 0;
            for (const Transition& t : data) c += t.s == s;
            return static_cast<double>(c) / static_cast<double>(n);
        }();
        // Episode-level ratio estimator SE via the delta method.
        std::vector<double> xs, ys;
        for (auto& [id, counts] : per_episode) {
            xs.push_back(counts.size() ? counts[s] : 0.0);
            ys.push_back(ep_sizes[id]);
        }
        const double m_eps = static_cast<double>(xs.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i] / m_eps;
            my += ys[i] / m_eps;
        }
        double var = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) var += sqr(xs[i] - freq * ys[i]) / (m_eps - 1);
        const double se = std::sqrt(var / m_eps) / my;
        CHECK(std::abs(freq - d[s]) <= 3.0 * se);
    }
}

TEST_CASE("builder invariants hold across random slip variants") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int len = 2 + static_cast<int>(uniform_index(rng, 8));
        const RewardMode mode = uniform01(rng) < 0.5 ? RewardMode::GoalPlusOne : RewardMode::StepMinusOne;
        MDPSpec m = build_chain(len, mode, 0.5 + 0.4 * uniform01(rng));
        if (uniform01(rng) < 0.7) m = apply_slip_noise(m, uniform01(rng));
        CHECK_NOTHROW(validate_spec(m));
    }
}

TEST_CASE("mdp json round-trip") {
    const MDPSpec m = apply_slip_noise(build_chain(5, RewardMode::StepMinusOne, 0.95), 0.3);
    const MDPSpec back = mdp_from_json(mdp_to_json(m));
    CHECK(back.num_states == m.num_states);
    CHECK(back.num_actions == m.num_actions);
    CHECK(back.transition == m.transition);
    CHECK(back.reward == m.reward);
    CHECK(back.terminal == m.terminal);
    CHECK(back.start == m.start);
    CHECK(back.gamma == m.gamma);
    CHECK(back.r_max == m.r_max);
}

TEST_CASE("dataset csv round-trip") {
    const MDPSpec m = build_chain(3, RewardMode::GoalPlusOne, 0.9);
    Rng rng(17);
    const auto data = generate_dataset(m, BehaviorPolicy::uniform(3, 2), 57, 20, rng);
    std::stringstream ss;
    write_dataset_csv(ss, data);
    const auto back = read_dataset_csv(ss);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].s == data[i].s);
        CHECK(back[i].a == data[i].a);
        CHECK(back[i].r == data[i].r);
        CHECK(back[i].s_next == data[i].s_next);
        CHECK(back[i].done == data[i].done);
        CHECK(back[i].episode_id == data[i].episode_id);
        CHECK(back[i].step_index == data[i].step_index);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "lql/mdp.hpp"
#include "lql/oracle.hpp"
#include "lql/qfunc.hpp"

using namespace lql;

namespace {

// Central finite difference of Q(s,a) with respect to parameter i.
double fd_value_grad(QFunction& q, int s, int a, std::size_t i, double h = 1e-5) {
    const double saved = q.params()[i];
    q.params()[i] = saved + h;
    const double up = q.evaluate(s, a);
    q.params()[i] = saved - h;
    const double down = q.evaluate(s, a);
    q.params()[i] = saved;
    return (up - down) / (2.0 * h);
}

void check_value_gradient(QFunction& q, Rng& rng, int probes_per_draw, double rel_tol = 1e-4) {
    const int s = static_cast<int>(uniform_index(rng, q.num_states()));
    const int a = static_cast<int>(uniform_index(rng, q.num_actions()));
    ForwardTrace trace;
    q.evaluate_traced(s, a, trace);
    std::vector<double> grads(q.num_params(), 0.0);
    q.accumulate_value_gradient(trace, 1.0, grads);
    for (int p = 0; p < probes_per_draw; ++p) {
        const std::size_t i = uniform_index(rng, q.num_params());
        const double fd = fd_value_grad(q, s, a, i);
        const double denom = std::max({1.0, std::abs(fd), std::abs(grads[i])});
        CHECK(std::abs(grads[i] - fd) / denom <= rel_tol);
    }
}

}  // namespace

TEST_CASE("evaluate: zero init, loaded oracle table, linear one-hot identity") {
    QFunction zero = QFunction::tabular(3, 2);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) CHECK(zero.evaluate(s, a) == 0.0);

    const MDPSpec m = build_chain(3, RewardMode::GoalPlusOne, 0.9);
    const QStar qs = value_iteration(m, 1e-12);
    QFunction loaded = QFunction::tabular_from(3, 2, qs.q);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) CHECK(loaded.evaluate(s, a) == qs.at(s, a));

    QFunction lin = QFunction::linear(FeatureMap::one_hot(3, 2));
    lin.params() = qs.q;  // one-hot weights are exactly the table
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) CHECK(lin.evaluate(s, a) == loaded.evaluate(s, a));

    CHECK_THROWS_AS(zero.evaluate(3, 0), InvalidInput);
    CHECK_THROWS_AS(zero.evaluate(0, 2), InvalidInput);
}

TEST_CASE("greedy_action: tie rule, oracle argmax, scaling invariance") {
    QFunction flat = QFunction::tabular(2, 3);
    CHECK(flat.greedy_action(0) == 0);

    const MDPSpec m = build_chain(2, RewardMode::GoalPlusOne, 0.5);
    const QStar qs = value_iteration(m, 1e-12);
    QFunction q = QFunction::tabular_from(2, 2, qs.q);
    CHECK(q.greedy_action(0) == kChainForward);

    for (double c : {0.5, 2.0, 10.0}) {
        std::vector<double> scaled = qs.q;
        for (double& v : scaled) v *= c;
        QFunction qc = QFunction::tabular_from(2, 2, scaled);
        CHECK(qc.greedy_action(0) == q.greedy_action(0));
    }
}

TEST_CASE("soft_update: copy case, direct formula, geometric convergence") {
    {
        QFunction q = QFunction::tabular(2, 2);
        q.params() = {1.0, -2.0, 3.0, 0.5};
        TargetPair pair(q, 1.0);
        pair.target.params() = {0.0, 0.0, 0.0, 0.0};
        soft_update(pair);
        CHECK(pair.target.params() == pair.online.params());
    }
    {
        QFunction q = QFunction::tabular(1, 1);
        q.params() = {1.0};
        TargetPair pair(q, 0.005);
        pair.target.params() = {0.0};
        soft_update(pair);
        CHECK(pair.target.params()[0] == doctest::Approx(0.005).epsilon(1e-12));
    }
    {
        QFunction q = QFunction::tabular(1, 1);
        q.params() = {1.0};
        TargetPair pair(q, 0.1);
        pair.target.params() = {0.0};
        double prev_gap = 1.0;
        for (int i = 0; i < 50; ++i) {
            soft_update(pair);
            const double gap = std::abs(1.0 - pair.target.params()[0]);
            CHECK(gap == doctest::Approx(prev_gap * 0.9).epsilon(1e-12));
            prev_gap = gap;
        }
        CHECK(prev_gap < 6e-3);
    }
}

TEST_CASE("soft_update: target equals tau*online + (1-tau)*prev elementwise") {
    QFunction q = QFunction::mlp(4, 2, 8, 77);
    TargetPair pair(q, 0.25);
    Rng rng(3);
    for (double& p : pair.target.params()) p = normal01(rng);
    const std::vector<double> prev = pair.target.params();
    soft_update(pair);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        const double expect = 0.25 * pair.online.params()[i] + 0.75 * prev[i];
        const double denom = std::max(1.0, std::abs(expect));
        CHECK(std::abs(pair.target.params()[i] - expect) / denom <= 1e-12);
    }
}

TEST_CASE("apply_gradient: identity on zero grads, single-cell step") {
    QFunction q = QFunction::tabular(2, 2);
    q.params() = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> before = q.params();
    q.apply_gradient(std::vector<double>(4, 0.0), 0.1);
    CHECK(q.params() == before);

    std::vector<double> g(4, 0.0);
    g[1] = 1.0;
    q.apply_gradient(g, 0.1);
    CHECK(q.params()[1] == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(q.params()[0] == 1.0);

    CHECK_THROWS_AS(q.apply_gradient(std::vector<double>(3, 0.0), 0.1), InvalidInput);
}

TEST_CASE("gradient check: backprop matches central differences on all representations") {
    Rng rng(2025);
    int draws = 0;
    for (int trial = 0; trial < 12; ++trial) {
        QFunction tab = QFunction::tabular(5, 3);
        for (double& p : tab.params()) p = normal01(rng);
        check_value_gradient(tab, rng, 4);

        QFunction lin = QFunction::linear(FeatureMap::aliased_pairs(6, 2));
        for (double& p : lin.params()) p = normal01(rng);
        check_value_gradient(lin, rng, 4);

        QFunction net = QFunction::mlp(5, 3, 16, derive_seed(9, trial));
        check_value_gradient(net, rng, 10);
        draws += 3;
    }
    CHECK(draws >= 36);
}

TEST_CASE("eval_counter: exact accounting for evaluate and greedy calls") {
    QFunction q = QFunction::mlp(4, 3, 8, 5);
    q.reset_eval_count();
    Rng rng(8);
    const int k = 17, g = 9;
    for (int i = 0; i < k; ++i)
        q.evaluate(static_cast<int>(uniform_index(rng, 4)), static_cast<int>(uniform_index(rng, 3)));
    for (int i = 0; i < g; ++i) q.greedy_action(static_cast<int>(uniform_index(rng, 4)));
    CHECK(q.eval_count() == static_cast<std::uint64_t>(k + g * 3));
}

TEST_CASE("checkpoints round-trip exactly") {
    Rng rng(4);
    for (int which = 0; which < 3; ++which) {
        QFunction q = which == 0   ? QFunction::tabular(4, 2)
                      : which == 1 ? QFunction::linear(FeatureMap::one_hot(4, 2))
                                   : QFunction::mlp(4, 2, 8, 11);
        for (double& p : q.params()) p = 10.0 * normal01(rng);
        std::stringstream ss;
        q.save_params(ss);
        QFunction back = which == 0   ? QFunction::tabular(4, 2)
                         : which == 1 ? QFunction::linear(FeatureMap::one_hot(4, 2))
                                      : QFunction::mlp(4, 2, 8, 12);
        back.load_params(ss);
        CHECK(back.params() == q.params());  // %.17g round-trips bit-exactly

        std::stringstream bad;
        q.save_params(bad);
        QFunction wrong = QFunction::tabular(5, 2);
        CHECK_THROWS_AS(wrong.load_params(bad), InvalidInput);
    }
}

TEST_CASE("tabular TD with lr=1 and synced target is asynchronous value iteration") {
    Rng rng(6);
    const MDPSpec m = testutil::random_deterministic_mdp(rng, 5, 2, 0.9);
    const QStar qs = value_iteration(m, 1e-12);

    QFunction online = QFunction::tabular(5, 2);
    std::vector<double> async_vi(5 * 2, 0.0);

    // Fixed visiting order over all (s, a) cells, repeated.
    for (int sweep = 0; sweep < 200; ++sweep) {
        for (int s = 0; s < 5; ++s)
            for (int a = 0; a < 2; ++a) {
                // Deterministic successor.
                int s2 = 0;
                for (int t = 0; t < 5; ++t)
                    if (m.trans(s, a, t) == 1.0) s2 = t;
                // TD with lr=1 bootstrapping from the online table.
                double best = online.evaluate(s2, 0);
                for (int a2 = 1; a2 < 2; ++a2) best = std::max(best, online.evaluate(s2, a2));
                const double target = m.rew(s, a) + m.gamma * best;
                std::vector<double> g(online.num_params(), 0.0);
                ForwardTrace tr;
                const double cur = online.evaluate_traced(s, a, tr);
                online.accumulate_value_gradient(tr, 2.0 * (cur - target), g);
                online.apply_gradient(g, 0.5);  // lr*2*(q-t) = full replacement

                // Reference asynchronous value iteration on the same ordering.
                double best_ref = async_vi[static_cast<std::size_t>(s2) * 2];
                for (int a2 = 1; a2 < 2; ++a2)
                    best_ref = std::max(best_ref, async_vi[static_cast<std::size_t>(s2) * 2 + a2]);
                async_vi[static_cast<std::size_t>(s) * 2 + a] = m.rew(s, a) + m.gamma * best_ref;
            }
    }
    for (int s = 0; s < 5; ++s)
        for (int a = 0; a < 2; ++a) {
            CHECK(online.evaluate(s, a) == doctest::Approx(async_vi[static_cast<std::size_t>(s) * 2 + a])
                                                .epsilon(1e-10));
            CHECK(online.evaluate(s, a) == doctest::Approx(qs.at(s, a)).epsilon(1e-8));
        }
}

TEST_CASE("adam: first step moves parameters by lr in the gradient sign") {
    std::vector<double> params = {1.0, -1.0};
    Adam opt(2);
    opt.step(params, {0.5, -0.25}, 0.01);
    // Bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g).
    CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(-1.0 + 0.01).epsilon(1e-6));
}

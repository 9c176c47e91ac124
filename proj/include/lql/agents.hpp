#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lql/losses.hpp"
#include "lql/mdp.hpp"
#include "lql/oracle.hpp"
#include "lql/qfunc.hpp"
#include "lql/replay.hpp"
#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Training configuration. Values marked (table) are the reference defaults of
// the common hyperparameter table; the desk preset shrinks batch and step
// counts to minutes-scale runs without touching the learning rule.
// ---------------------------------------------------------------------------
struct EnvConfig {
    std::string kind = "chain";  // chain | gridmaze
    int chain_length = 8;
    std::string reward_mode = "goal-plus-one";
    std::vector<std::string> maze_layout;  // used when kind == gridmaze
    double sigma = 0.0;                    // slip noise
};

struct DatasetConfig {
    std::string behavior = "uniform";  // uniform | eps-greedy
    double behavior_epsilon = 0.2;     // for eps-greedy around the oracle Q*
    std::int64_t num_transitions = 20000;
    int max_episode_len = 200;
    bool uniform_starts = false;
};

struct TrainConfig {
    double gamma = 0.99;   // (table)
    double lr = 3e-4;      // (table)
    double tau = 5e-3;     // (table)
    int trajs_per_batch = 16;  // desk default; table value 128
    int traj_len = 8;          // L (table)
    double lambda_ub = 1.0;    // (table)
    double lambda_lb = 1.0;    // (table)
    std::string method = "lql";  // td | td-n | lql
    int nstep = 1;               // n for td-n
    std::string protocol = "offline-only";  // offline-only | offline-then-online | symmetric-online
    std::int64_t offline_steps = 20000;
    std::int64_t online_steps = 20000;
    int eval_every = 500;
    int eval_episodes = 50;
    int eval_max_len = 100;
    std::uint64_t seed = 0;
    std::string repr = "tabular";  // tabular | linear | linear-aliased | mlp
    int mlp_hidden = 64;
    std::string optimizer = "sgd";  // sgd | adam
    std::int64_t buffer_capacity = 2000000;  // (table)
    bool collect_hinge_stats = false;
    EnvConfig env;
    DatasetConfig dataset;

    HingeWeights hinge_weights() const { return HingeWeights{lambda_ub, lambda_lb}; }

    // Transition-matched batch size for td / td-n updates.
    int transitions_per_batch() const { return trajs_per_batch * traj_len; }
};

// Reference-scale preset mirroring the common hyperparameter table.
inline TrainConfig paper_scale_config() {
    TrainConfig c;
    c.gamma = 0.99;
    c.lr = 3e-4;
    c.tau = 5e-3;
    c.trajs_per_batch = 128;
    c.traj_len = 8;
    c.lambda_ub = 1.0;
    c.lambda_lb = 1.0;
    c.offline_steps = 2000000;
    c.online_steps = 2000000;
    c.buffer_capacity = 2000000;
    c.repr = "mlp";
    c.optimizer = "adam";
    return c;
}

inline void validate_config(const TrainConfig& c) {
    if (c.gamma < 0.0 || c.gamma >= 1.0) throw InvalidConfig("gamma must lie in [0,1)");
    if (c.lr <= 0.0) throw InvalidConfig("lr must be positive");
    if (c.tau <= 0.0 || c.tau > 1.0) throw InvalidConfig("tau must lie in (0,1]");
    if (c.trajs_per_batch < 1 || c.traj_len < 1) throw InvalidConfig("batch shape must be positive");
    if (c.lambda_ub < 0.0 || c.lambda_lb < 0.0) throw InvalidConfig("lambdas must be >= 0");
    if (c.method != "td" && c.method != "td-n" && c.method != "lql")
        throw InvalidConfig("unknown method: " + c.method);
    if (c.method == "td-n" && c.nstep < 1) throw InvalidConfig("td-n requires n >= 1");
    if (c.protocol != "offline-only" && c.protocol != "offline-then-online" &&
        c.protocol != "symmetric-online")
        throw InvalidConfig("unknown protocol: " + c.protocol);
    if (c.repr != "tabular" && c.repr != "linear" && c.repr != "linear-aliased" && c.repr != "mlp")
        throw InvalidConfig("unknown repr: " + c.repr);
    if (c.optimizer != "sgd" && c.optimizer != "adam") throw InvalidConfig("unknown optimizer");
    if (c.env.kind != "chain" && c.env.kind != "gridmaze") throw InvalidConfig("unknown env kind");
    if (c.eval_every < 1 || c.eval_episodes < 1 || c.eval_max_len < 1)
        throw InvalidConfig("evaluation settings must be positive");
}

inline MDPSpec build_env(const TrainConfig& c) {
    MDPSpec m = c.env.kind == "chain"
                    ? build_chain(c.env.chain_length, reward_mode_from_string(c.env.reward_mode), c.gamma)
                    : build_gridmaze(c.env.maze_layout, reward_mode_from_string(c.env.reward_mode), c.gamma);
    if (c.env.sigma > 0.0) m = apply_slip_noise(m, c.env.sigma);
    return m;
}

inline QFunction make_qfunction(const TrainConfig& c, const MDPSpec& m) {
    if (c.repr == "tabular") return QFunction::tabular(m.num_states, m.num_actions);
    if (c.repr == "linear") return QFunction::linear(FeatureMap::one_hot(m.num_states, m.num_actions));
    if (c.repr == "linear-aliased")
        return QFunction::linear(FeatureMap::aliased_pairs(m.num_states, m.num_actions));
    return QFunction::mlp(m.num_states, m.num_actions, c.mlp_hidden, derive_seed(c.seed, 71));
}

// ---------------------------------------------------------------------------
// Hinge activation statistics, accumulated streaming during LQL updates.
// Frequencies pool pair outcomes; magnitudes are per-step means over all
// pairs at a distance (zeros included) normalized by the squared batch-mean
// online value at that step.
// ---------------------------------------------------------------------------
struct HingeStatsAccum {
    int L = 0;
    // Indexed by temporal distance d = l-k (LB, valid 2..L) or k-i (UB, 0..L-2;
    // the same-state term is d = 0). Slot count L+1 keeps indexing direct.
    std::vector<std::int64_t> pairs_seen[2];
    std::vector<std::int64_t> pairs_active[2];
    std::vector<double> norm_mag_sum[2];
    std::vector<std::int64_t> steps_counted[2];

    void init(int traj_len) {
        L = traj_len;
        for (int side = 0; side < 2; ++side) {
            pairs_seen[side].assign(L + 1, 0);
            pairs_active[side].assign(L + 1, 0);
            norm_mag_sum[side].assign(L + 1, 0);
            steps_counted[side].assign(L + 1, 0);
        }
    }
};

inline constexpr int kSideLB = 0;
inline constexpr int kSideUB = 1;

// ---------------------------------------------------------------------------
// One-update primitives. Each samples per Algorithm-1 structure, applies one
// gradient step and one soft update.
// ---------------------------------------------------------------------------
struct Optimizer {
    std::unique_ptr<Adam> adam;  // null -> plain gradient descent

    static Optimizer for_config(const TrainConfig& c, const QFunction& q) {
        Optimizer o;
        if (c.optimizer == "adam") o.adam = std::make_unique<Adam>(q.num_params());
        return o;
    }

    void step(QFunction& q, const std::vector<double>& grads, double lr) {
        if (adam)
            adam->step(q.params(), grads, lr);
        else
            q.apply_gradient(grads, lr);
    }
};

namespace detail {

inline void collect_hinge_stats_row(const TrajectoryBatch& b, const LossBreakdown& row_loss,
                                    double norm_q_sq, HingeStatsAccum& acc,
                                    std::vector<double>& step_sum, std::vector<std::int64_t>& step_cnt) {
    // step_sum/step_cnt are (2*(L+1)) scratch: per-step pooled penalties.
    for (const auto& [kl, v] : row_loss.per_pair_lb) {
        const int d = kl.second - kl.first;
        acc.pairs_seen[kSideLB][d]++;
        if (v > 0.0) acc.pairs_active[kSideLB][d]++;
        step_sum[kSideLB * (b.L + 1) + d] += v / norm_q_sq;
        step_cnt[kSideLB * (b.L + 1) + d]++;
    }
    for (const auto& [ik, v] : row_loss.per_pair_ub) {
        const int d = ik.second - ik.first;
        acc.pairs_seen[kSideUB][d]++;
        if (v > 0.0) acc.pairs_active[kSideUB][d]++;
        step_sum[kSideUB * (b.L + 1) + d] += v / norm_q_sq;
        step_cnt[kSideUB * (b.L + 1) + d]++;
    }
}

}  // namespace detail

// LQL update on a batch of replay trajectories: build the evaluation cache
// per row, average the trajectory losses, take one gradient step on the
// online network, then soft-update the target.
inline LossBreakdown lql_update_batch(const TrajectoryBatch& batch, TargetPair& pair,
                                      const TrainConfig& cfg, Optimizer& opt,
                                      HingeStatsAccum* stats = nullptr) {
    const HingeWeights w = cfg.hinge_weights();
    const int R = batch.num_rows;
    std::vector<double> grads(pair.online.num_params(), 0.0);
    LossBreakdown mean;

    std::vector<double> step_sum;
    std::vector<std::int64_t> step_cnt;
    double batch_q_sum = 0.0;
    std::int64_t batch_q_n = 0;
    std::vector<EvalCache> caches;
    caches.reserve(R);
    for (int r = 0; r < R; ++r) {
        caches.push_back(build_eval_cache(batch, r, pair.online, pair.target, true));
        if (stats) {
            for (double q : caches.back().q_online_logged) batch_q_sum += q;
            batch_q_n += caches.back().valid_len;
        }
    }
    const double mean_q = batch_q_n ? batch_q_sum / batch_q_n : 0.0;
    const double norm_q_sq = std::max(mean_q * mean_q, 1e-12);
    if (stats) {
        step_sum.assign(2 * (batch.L + 1), 0.0);
        step_cnt.assign(2 * (batch.L + 1), 0);
    }

    for (int r = 0; r < R; ++r) {
        const LossBreakdown row = lql_trajectory_loss(batch, caches[r], r, w, stats != nullptr);
        mean.td += row.td / R;
        mean.lb += row.lb / R;
        mean.ub += row.ub / R;
        accumulate_lql_gradient(batch, caches[r], r, w, pair.online, grads, 1.0 / R);
        if (stats) detail::collect_hinge_stats_row(batch, row, norm_q_sq, *stats, step_sum, step_cnt);
    }
    mean.total = mean.td + w.lambda_ub * mean.ub + w.lambda_lb * mean.lb;

    if (stats) {
        for (int side = 0; side < 2; ++side)
            for (int d = 0; d <= batch.L; ++d) {
                const std::int64_t n = step_cnt[side * (batch.L + 1) + d];
                if (n == 0) continue;
                stats->norm_mag_sum[side][d] += step_sum[side * (batch.L + 1) + d] / n;
                stats->steps_counted[side][d]++;
            }
    }

    opt.step(pair.online, grads, cfg.lr);
    soft_update(pair);
    return mean;
}

inline LossBreakdown lql_update(const ReplayBuffer& buffer, TargetPair& pair, const TrainConfig& cfg,
                                Rng& rng, Optimizer& opt, HingeStatsAccum* stats = nullptr) {
    const TrajectoryBatch batch =
        buffer.sample_trajectories(cfg.trajs_per_batch, cfg.traj_len, cfg.gamma, rng);
    return lql_update_batch(batch, pair, cfg, opt, stats);
}

// n-step TD update on a batch of length-n windows; only position 0 of each
// window contributes a loss, so the evaluation cost per window is one online
// evaluation plus one bootstrap (greedy + value) at the window end.
inline double nstep_update_batch(const TrajectoryBatch& batch, TargetPair& pair, const TrainConfig& cfg,
                                 int n, Optimizer& opt) {
    const int R = batch.num_rows;
    std::vector<double> grads(pair.online.num_params(), 0.0);
    double mean_loss = 0.0;
    for (int r = 0; r < R; ++r) {
        const int m = std::min(n, batch.len(r));
        ForwardTrace trace;
        const double q = pair.online.evaluate_traced(batch.state(r, 0), batch.action(r, 0), trace);
        double boot = 0.0;
        if (!(m == batch.len(r) && batch.terminal_end(r))) {
            const int s_m = batch.state(r, m);
            const int a_star = pair.target.greedy_action(s_m);
            boot = pair.target.evaluate(s_m, a_star);
        }
        const double target = partial_return(batch, r, 0, m) + batch.gamma_pow[m] * boot;
        mean_loss += sqr(q - target) / R;
        pair.online.accumulate_value_gradient(trace, 2.0 * (q - target) / R, grads);
    }
    opt.step(pair.online, grads, cfg.lr);
    soft_update(pair);
    return mean_loss;
}

// Uniform transition sampling TD: transition-matched to LQL via rows of
// length 1 (a length-1 window is exactly one independent transition).
inline double td_update(const ReplayBuffer& buffer, TargetPair& pair, const TrainConfig& cfg, Rng& rng,
                        Optimizer& opt) {
    const TrajectoryBatch batch =
        buffer.sample_trajectories(cfg.transitions_per_batch(), 1, cfg.gamma, rng);
    return nstep_update_batch(batch, pair, cfg, 1, opt);
}

inline double nstep_update(const ReplayBuffer& buffer, TargetPair& pair, const TrainConfig& cfg, Rng& rng,
                           Optimizer& opt) {
    const TrajectoryBatch batch =
        buffer.sample_trajectories(cfg.transitions_per_batch(), cfg.nstep, cfg.gamma, rng);
    return nstep_update_batch(batch, pair, cfg, cfg.nstep, opt);
}

// ---------------------------------------------------------------------------
// Policy evaluation: fraction of greedy rollouts that reach a terminal state
// within max_len steps.
// ---------------------------------------------------------------------------
inline double evaluate_policy(const MDPSpec& mdp, const QFunction& q, int episodes, int max_len,
                              Rng& rng) {
    if (episodes < 1) throw InvalidCall("evaluate_policy: episodes must be >= 1");
    int successes = 0;
    for (int e = 0; e < episodes; ++e) {
        int s = sample_start(mdp, rng);
        for (int t = 0; t < max_len; ++t) {
            if (mdp.is_terminal(s)) break;
            const StepResult res = step(mdp, s, q.greedy_action(s), rng);
            s = res.s_next;
        }
        if (mdp.is_terminal(s)) ++successes;
    }
    return static_cast<double>(successes) / episodes;
}

// ---------------------------------------------------------------------------
// Full training runs
// ---------------------------------------------------------------------------
struct EvalPoint {
    std::int64_t step = 0;
    double success_rate = 0.0;
    double mean_online_q = 0.0;
    double max_abs_q = 0.0;
    double td = 0.0, lb = 0.0, ub = 0.0, total = 0.0;  // means since the last point
    std::uint64_t evals = 0;  // cumulative update-attributed evaluations
};

struct TrainReport {
    std::vector<EvalPoint> points;
    double final_success = 0.0;
    double max_online_q_overall = -1e300;  // max signed Q over eval points
    double max_abs_q_overall = 0.0;
    std::uint64_t update_evals_total = 0;
    HingeStatsAccum hinge_stats;
    std::string final_checkpoint;  // serialized online parameters

    bool blew_up(double q_max) const { return max_online_q_overall > 0.5 * q_max; }
};

inline void write_report_csv(std::ostream& os, const TrainReport& rep) {
    os << "step,success_rate,mean_online_q,max_abs_q,td,lb,ub,total,evals\n";
    char buf[256];
    for (const EvalPoint& p : rep.points) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%llu",
                      static_cast<long long>(p.step), p.success_rate, p.mean_online_q, p.max_abs_q, p.td,
                      p.lb, p.ub, p.total, static_cast<unsigned long long>(p.evals));
        os << buf << '\n';
    }
}

namespace detail {

// Rolls the environment online, pushing whole episodes into a buffer.
class EnvRoller {
public:
    EnvRoller(const MDPSpec& mdp, int max_episode_len, Rng& rng)
        : mdp_(mdp), max_len_(max_episode_len), rng_(rng) {
        reset();
    }

    // Take one step with the given action selector; push the episode into
    // `buffer` when it terminates or hits the length cap.
    template <typename SelectAction>
    void step_once(ReplayBuffer& buffer, SelectAction&& select) {
        const int a = select(state_);
        const StepResult res = lql::step(mdp_, state_, a, rng_);
        Transition t;
        t.s = state_;
        t.a = a;
        t.r = res.r;
        t.s_next = res.s_next;
        t.done = res.done;
        t.episode_id = episode_id_;
        t.step_index = static_cast<std::int64_t>(pending_.size());
        pending_.push_back(t);
        state_ = res.s_next;
        if (res.done || static_cast<int>(pending_.size()) >= max_len_) {
            buffer.push_episode(std::move(pending_));
            pending_.clear();
            ++episode_id_;
            reset();
        }
    }

private:
    void reset() { state_ = sample_start(mdp_, rng_); }

    const MDPSpec& mdp_;
    int max_len_;
    Rng& rng_;
    int state_ = 0;
    std::vector<Transition> pending_;
    std::int64_t episode_id_ = 1000000;  // offset away from dataset episode ids
};

inline double exploration_epsilon(std::int64_t online_step, std::int64_t online_steps) {
    // Linear anneal 1.0 -> 0.05 over the first 20% of online steps.
    const double frac = static_cast<double>(online_step) / std::max<std::int64_t>(1, online_steps);
    if (frac >= 0.2) return 0.05;
    return 1.0 + (0.05 - 1.0) * (frac / 0.2);
}

}  // namespace detail

// Generate the offline dataset described by the config. Behavior epsilon-greedy
// references the exact oracle Q* of the (possibly slip-noised) environment.
inline std::vector<Transition> make_dataset(const MDPSpec& mdp, const TrainConfig& cfg, Rng& rng) {
    const MDPSpec source = cfg.dataset.uniform_starts ? with_uniform_starts(mdp) : mdp;
    BehaviorPolicy pi = BehaviorPolicy::uniform(mdp.num_states, mdp.num_actions);
    if (cfg.dataset.behavior == "eps-greedy") {
        const QStar qs = value_iteration(mdp);
        pi = BehaviorPolicy::epsilon_greedy(qs.q, mdp.num_states, mdp.num_actions,
                                            cfg.dataset.behavior_epsilon);
    } else if (cfg.dataset.behavior != "uniform") {
        throw InvalidConfig("unknown dataset behavior: " + cfg.dataset.behavior);
    }
    return generate_dataset(source, pi, cfg.dataset.num_transitions, cfg.dataset.max_episode_len, rng);
}

// Run the configured protocol and capture metrics every eval_every updates.
// All randomness is derived from cfg.seed through fixed stream ids, so equal
// configs reproduce byte-identical reports.
inline TrainReport train(const MDPSpec& mdp, const std::vector<Transition>& dataset,
                         const TrainConfig& cfg) {
    validate_config(cfg);
    TrainReport rep;
    if (cfg.collect_hinge_stats && cfg.method != "lql")
        throw InvalidConfig("hinge statistics require method=lql");

    ReplayBuffer offline(std::max<std::int64_t>(cfg.buffer_capacity,
                                                static_cast<std::int64_t>(dataset.size()) + 1));
    offline.push_dataset(dataset);

    TargetPair pair(make_qfunction(cfg, mdp), cfg.tau);
    Optimizer opt = Optimizer::for_config(cfg, pair.online);
    if (cfg.collect_hinge_stats) rep.hinge_stats.init(cfg.traj_len);

    Rng sample_rng(derive_seed(cfg.seed, 1));
    Rng env_rng(derive_seed(cfg.seed, 2));
    Rng eval_rng(derive_seed(cfg.seed, 3));

    LossBreakdown window;
    std::int64_t window_n = 0;
    const HingeWeights w = cfg.hinge_weights();

    auto do_update = [&](const ReplayBuffer& primary, const ReplayBuffer* secondary) {
        // When `secondary` is present the batch is drawn half and half
        // (symmetric sampling); otherwise entirely from `primary`.
        const std::uint64_t before = pair.online.eval_count() + pair.target.eval_count();
        if (cfg.method == "lql") {
            LossBreakdown lb;
            if (secondary && !secondary->empty()) {
                const int half = std::max(1, cfg.trajs_per_batch / 2);
                auto rows = primary.sample_rows(cfg.trajs_per_batch - half, cfg.traj_len, sample_rng);
                auto rows2 = secondary->sample_rows(half, cfg.traj_len, sample_rng);
                rows.insert(rows.end(), rows2.begin(), rows2.end());
                const TrajectoryBatch batch = make_batch(rows, cfg.traj_len, cfg.gamma);
                lb = lql_update_batch(batch, pair, cfg, opt,
                                      cfg.collect_hinge_stats ? &rep.hinge_stats : nullptr);
            } else {
                lb = lql_update(primary, pair, cfg, sample_rng, opt,
                                cfg.collect_hinge_stats ? &rep.hinge_stats : nullptr);
            }
            window.td += lb.td;
            window.lb += lb.lb;
            window.ub += lb.ub;
            window.total += lb.total;
        } else {
            const int n = cfg.method == "td" ? 1 : cfg.nstep;
            double loss = 0.0;
            if (secondary && !secondary->empty()) {
                const int half = std::max(1, cfg.transitions_per_batch() / 2);
                auto rows = primary.sample_rows(cfg.transitions_per_batch() - half, n, sample_rng);
                auto rows2 = secondary->sample_rows(half, n, sample_rng);
                rows.insert(rows.end(), rows2.begin(), rows2.end());
                const TrajectoryBatch batch = make_batch(rows, n, cfg.gamma);
                loss = nstep_update_batch(batch, pair, cfg, n, opt);
            } else {
                const TrajectoryBatch batch =
                    primary.sample_trajectories(cfg.transitions_per_batch(), n, cfg.gamma, sample_rng);
                loss = nstep_update_batch(batch, pair, cfg, n, opt);
            }
            window.td += loss;
            window.total += loss;
        }
        rep.update_evals_total += pair.online.eval_count() + pair.target.eval_count() - before;
        ++window_n;
    };

    auto record_point = [&](std::int64_t step_index) {
        EvalPoint p;
        p.step = step_index;
        p.success_rate = evaluate_policy(mdp, pair.online, cfg.eval_episodes, cfg.eval_max_len, eval_rng);
        p.mean_online_q = pair.online.mean_value();
        p.max_abs_q = pair.online.max_abs_param_value();
        if (window_n > 0) {
            p.td = window.td / window_n;
            p.lb = window.lb / window_n;
            p.ub = window.ub / window_n;
            p.total = window.total / window_n;
        }
        p.evals = rep.update_evals_total;
        window = LossBreakdown{};
        window_n = 0;
        rep.points.push_back(p);
        rep.final_success = p.success_rate;
        rep.max_online_q_overall = std::max(rep.max_online_q_overall, pair.online.max_value());
        rep.max_abs_q_overall = std::max(rep.max_abs_q_overall, p.max_abs_q);
    };

    std::int64_t global_step = 0;

    if (cfg.protocol != "symmetric-online") {
        for (std::int64_t t = 0; t < cfg.offline_steps; ++t) {
            do_update(offline, nullptr);
            ++global_step;
            if (global_step % cfg.eval_every == 0) record_point(global_step);
        }
    }

    if (cfg.protocol == "offline-then-online") {
        // The offline data seeds the online buffer; each gradient step is
        // paired with one environment step (UTD 1) collected epsilon-greedily
        // from the online network.
        ReplayBuffer online_buf(cfg.buffer_capacity);
        for (const auto& ep : offline.episodes()) online_buf.push_episode(ep);
        detail::EnvRoller roller(mdp, cfg.dataset.max_episode_len, env_rng);
        for (std::int64_t t = 0; t < cfg.online_steps; ++t) {
            const double eps = detail::exploration_epsilon(t, cfg.online_steps);
            roller.step_once(online_buf, [&](int s) {
                if (uniform01(env_rng) < eps)
                    return static_cast<int>(uniform_index(env_rng, mdp.num_actions));
                return pair.online.greedy_action(s);
            });
            do_update(online_buf, nullptr);
            ++global_step;
            if (global_step % cfg.eval_every == 0) record_point(global_step);
        }
    } else if (cfg.protocol == "symmetric-online") {
        // No offline phase: every update mixes half offline dataset rows and
        // half rows from the growing online buffer.
        ReplayBuffer online_buf(cfg.buffer_capacity);
        detail::EnvRoller roller(mdp, cfg.dataset.max_episode_len, env_rng);
        for (std::int64_t t = 0; t < cfg.online_steps; ++t) {
            const double eps = detail::exploration_epsilon(t, cfg.online_steps);
            roller.step_once(online_buf, [&](int s) {
                if (uniform01(env_rng) < eps)
                    return static_cast<int>(uniform_index(env_rng, mdp.num_actions));
                return pair.online.greedy_action(s);
            });
            if (online_buf.empty())
                do_update(offline, nullptr);
            else
                do_update(offline, &online_buf);
            ++global_step;
            if (global_step % cfg.eval_every == 0) record_point(global_step);
        }
    }

    if (rep.points.empty() || rep.points.back().step != global_step) record_point(global_step);

    std::ostringstream ckpt;
    pair.online.save_params(ckpt);
    rep.final_checkpoint = ckpt.str();
    return rep;
}

inline TrainReport train(const TrainConfig& cfg) {
    const MDPSpec mdp = build_env(cfg);
    Rng data_rng(derive_seed(cfg.seed, 0));
    const std::vector<Transition> dataset = make_dataset(mdp, cfg, data_rng);
    return train(mdp, dataset, cfg);
}

}  // namespace lql

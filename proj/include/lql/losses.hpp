#pragma once

#include <map>
#include <utility>
#include <vector>

#include "lql/qfunc.hpp"
#include "lql/replay.hpp"
#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Cached network outputs for one trajectory row.
//
// Construction performs exactly the evaluations a 1-step TD update along the
// trajectory needs:
//   - Q_theta(s_k, a_k) for k = 0..m-1 (online, logged actions),
//   - a_k* = argmax_a Q_tbar(s_k, a) and Q_tbar(s_k, a_k*) for k = 0..m
// where m = valid_len. Every hinge term is then computed from these cached
// values alone; no further network evaluations happen downstream.
//
// Entries at indices >= valid_len are masked (absent). If the row ends at a
// terminal state the bootstrap value q_target_greedy[m] is 0 by convention
// and no evaluation is spent on it.
// ---------------------------------------------------------------------------
struct EvalCache {
    int valid_len = 0;
    bool terminal_end = false;
    std::vector<double> q_online_logged;  // m
    std::vector<double> q_target_greedy;  // m + 1
    std::vector<int> greedy_actions;      // m + 1 (0 placeholder at a terminal end)
    std::vector<ForwardTrace> traces;     // m, populated when with_traces
};

inline EvalCache build_eval_cache(const TrajectoryBatch& batch, int row, const QFunction& online,
                                  const QFunction& target, bool with_traces = true) {
    if (row < 0 || row >= batch.num_rows) throw InvalidIndices("build_eval_cache: row out of range");
    const int m = batch.len(row);
    EvalCache c;
    c.valid_len = m;
    c.terminal_end = batch.terminal_end(row);
    c.q_online_logged.resize(m);
    c.q_target_greedy.resize(m + 1);
    c.greedy_actions.resize(m + 1);
    if (with_traces) c.traces.resize(m);

    for (int k = 0; k < m; ++k) {
        const int s = batch.state(row, k), a = batch.action(row, k);
        c.q_online_logged[k] = with_traces ? online.evaluate_traced(s, a, c.traces[k]) : online.evaluate(s, a);
    }
    for (int k = 0; k <= m; ++k) {
        const int s = batch.state(row, k);
        if (k == m && c.terminal_end) {
            c.greedy_actions[k] = 0;
            c.q_target_greedy[k] = 0.0;
            continue;
        }
        const int a_star = target.greedy_action(s);
        c.greedy_actions[k] = a_star;
        c.q_target_greedy[k] = target.evaluate(s, a_star);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Index sets
// ---------------------------------------------------------------------------

// F(k) = {k+2, ..., valid_len}: future bootstrap indices for LB penalties.
// l = k+1 is excluded (it coincides with the 1-step TD target).
inline std::vector<int> future_index_set(int k, int valid_len) {
    if (k < 0 || k >= valid_len) throw InvalidIndices("future_index_set: need 0 <= k < valid_len");
    std::vector<int> out;
    for (int l = k + 2; l <= valid_len; ++l) out.push_back(l);
    return out;
}

// P(k) = {1, ..., k}: past reference indices for UB penalties, including the
// same-state term i = k. Empty for k = 0. Index 0 is excluded because the TD
// pass only produces target evaluations at next-states, i.e. positions >= 1.
inline std::vector<int> past_index_set(int k) {
    if (k < 0) throw InvalidIndices("past_index_set: k must be >= 0");
    std::vector<int> out;
    for (int i = 1; i <= k; ++i) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Loss terms. Gradients flow only through Q_theta(s_k, a_k); all target-side
// quantities are frozen numbers from the cache.
// ---------------------------------------------------------------------------

// 1-step TD: (Q_theta(s_k,a_k) - [r_k + gamma * Q_tbar(s_{k+1}, a*_{k+1})])^2
inline double td_loss(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k) {
    if (k < 0 || k >= cache.valid_len) throw InvalidIndices("td_loss: k out of range");
    const double target = batch.reward(row, k) + batch.gamma * cache.q_target_greedy[k + 1];
    return sqr(cache.q_online_logged[k] - target);
}

// d(td_loss)/d(Q_theta(s_k,a_k))
inline double td_loss_grad(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k) {
    if (k < 0 || k >= cache.valid_len) throw InvalidIndices("td_loss_grad: k out of range");
    const double target = batch.reward(row, k) + batch.gamma * cache.q_target_greedy[k + 1];
    return 2.0 * (cache.q_online_logged[k] - target);
}

// n-step TD: (Q_theta(s_k,a_k) - [G_{k:k+m} + gamma^m * bootstrap])^2 with
// m = min(n, steps to termination/truncation); bootstrap is 0 at a terminal.
inline double nstep_td_target(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k, int n) {
    if (k < 0 || k >= cache.valid_len) throw InvalidIndices("nstep_td_target: k out of range");
    if (n < 1) throw InvalidIndices("nstep_td_target: n must be >= 1");
    const int m = std::min(n, cache.valid_len - k);
    return partial_return(batch, row, k, k + m) + batch.gamma_pow[m] * cache.q_target_greedy[k + m];
}

inline double nstep_td_loss(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k, int n) {
    return sqr(cache.q_online_logged[k] - nstep_td_target(batch, cache, row, k, n));
}

inline double nstep_td_loss_grad(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k,
                                 int n) {
    return 2.0 * (cache.q_online_logged[k] - nstep_td_target(batch, cache, row, k, n));
}

// LB hinge: [G_{k:l} + gamma^{l-k} * Q_tbar(s_l, a_l*) - Q_theta(s_k, a_k)]_+^2.
// Active when the realized return to l plus the target bootstrap exceeds the
// current estimate at k; the gradient then pushes Q_theta(s_k,a_k) upward.
inline double lb_penalty(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k, int l) {
    if (k < 0 || k >= cache.valid_len || l < k + 2 || l > cache.valid_len)
        throw InvalidIndices("lb_penalty: need l in F(k) = {k+2..valid_len}");
    const double inner =
        partial_return(batch, row, k, l) + batch.gamma_pow[l - k] * cache.q_target_greedy[l] -
        cache.q_online_logged[k];
    return sqr(pos(inner));
}

// UB hinge: [G_{i:k} + gamma^{k-i} * Q_theta(s_k, a_k) - Q_tbar(s_i, a_i*)]_+^2.
// i = k reduces to the same-state bound [Q_theta(s_k,a_k) - Q_tbar(s_k,a_k*)]_+^2.
// Violations push Q_theta(s_k, a_k) downward.
inline double ub_penalty(const TrajectoryBatch& batch, const EvalCache& cache, int row, int i, int k) {
    if (k < 0 || k >= cache.valid_len || i < 1 || i > k)
        throw InvalidIndices("ub_penalty: need i in P(k) = {1..k}");
    const double inner =
        partial_return(batch, row, i, k) + batch.gamma_pow[k - i] * cache.q_online_logged[k] -
        cache.q_target_greedy[i];
    return sqr(pos(inner));
}

// Mean of lb_penalty over F(k); 0 when the set is empty.
inline double lb_aggregate(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k) {
    if (k < 0 || k >= cache.valid_len) throw InvalidIndices("lb_aggregate: k out of range");
    const int lo = k + 2, hi = cache.valid_len;
    if (lo > hi) return 0.0;
    double acc = 0.0;
    for (int l = lo; l <= hi; ++l) acc += lb_penalty(batch, cache, row, k, l);
    return acc / (hi - lo + 1);
}

// Mean of ub_penalty over P(k); 0 when the set is empty (k = 0).
inline double ub_aggregate(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k) {
    if (k < 0 || k >= cache.valid_len) throw InvalidIndices("ub_aggregate: k out of range");
    if (k == 0) return 0.0;
    double acc = 0.0;
    for (int i = 1; i <= k; ++i) acc += ub_penalty(batch, cache, row, i, k);
    return acc / k;
}

struct HingeWeights {
    double lambda_ub = 1.0;
    double lambda_lb = 1.0;
};

struct LossBreakdown {
    double td = 0.0;
    double lb = 0.0;
    double ub = 0.0;
    double total = 0.0;
    // Per-pair penalties, keyed (k, l) for LB and (i, k) for UB. Populated
    // only when pair collection is requested (hinge statistics runs).
    std::map<std::pair<int, int>, double> per_pair_lb;
    std::map<std::pair<int, int>, double> per_pair_ub;
};

// Position loss: l_TD(k) + lambda_UB * l_UB(k) + lambda_LB * l_LB(k).
inline LossBreakdown lql_loss(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k,
                              const HingeWeights& w, bool collect_pairs = false) {
    if (w.lambda_ub < 0.0 || w.lambda_lb < 0.0) throw InvalidConfig("lql_loss: lambdas must be >= 0");
    LossBreakdown out;
    out.td = td_loss(batch, cache, row, k);
    out.lb = lb_aggregate(batch, cache, row, k);
    out.ub = ub_aggregate(batch, cache, row, k);
    out.total = out.td + w.lambda_ub * out.ub + w.lambda_lb * out.lb;
    if (collect_pairs) {
        for (int l : future_index_set(k, cache.valid_len))
            out.per_pair_lb[{k, l}] = lb_penalty(batch, cache, row, k, l);
        for (int i : past_index_set(k)) out.per_pair_ub[{i, k}] = ub_penalty(batch, cache, row, i, k);
    }
    return out;
}

// Trajectory loss: average of position losses over the valid positions.
// Masked/truncated indices are absent from both numerators and denominators.
inline LossBreakdown lql_trajectory_loss(const TrajectoryBatch& batch, const EvalCache& cache, int row,
                                         const HingeWeights& w, bool collect_pairs = false) {
    LossBreakdown out;
    const int m = cache.valid_len;
    for (int k = 0; k < m; ++k) {
        LossBreakdown p = lql_loss(batch, cache, row, k, w, collect_pairs);
        out.td += p.td / m;
        out.lb += p.lb / m;
        out.ub += p.ub / m;
        if (collect_pairs) {
            out.per_pair_lb.merge(p.per_pair_lb);
            out.per_pair_ub.merge(p.per_pair_ub);
        }
    }
    out.total = out.td + w.lambda_ub * out.ub + w.lambda_lb * out.lb;
    return out;
}

// grads += scale * d(trajectory LQL loss)/dtheta, backpropagating the cached
// forward traces. Positions sharing a (s, a) cell accumulate additively.
void accumulate_lql_gradient(const TrajectoryBatch& batch, const EvalCache& cache, int row,
                             const HingeWeights& w, const QFunction& online, std::vector<double>& grads,
                             double scale);

// d/d(Q_theta(s_k,a_k)) of the position loss l_LQL(k). Since every hinge term
// in l_LB(k) and l_UB(k) touches exactly this one online value, the whole
// trajectory gradient reduces to one coefficient per position.
inline double lql_loss_grad(const TrajectoryBatch& batch, const EvalCache& cache, int row, int k,
                            const HingeWeights& w) {
    double g = td_loss_grad(batch, cache, row, k);
    const int m = cache.valid_len;
    const int f_lo = k + 2, f_hi = m;
    if (w.lambda_lb > 0.0 && f_lo <= f_hi) {
        double acc = 0.0;
        for (int l = f_lo; l <= f_hi; ++l) {
            const double inner = partial_return(batch, row, k, l) +
                                 batch.gamma_pow[l - k] * cache.q_target_greedy[l] -
                                 cache.q_online_logged[k];
            acc += -2.0 * pos(inner);
        }
        g += w.lambda_lb * acc / (f_hi - f_lo + 1);
    }
    if (w.lambda_ub > 0.0 && k >= 1) {
        double acc = 0.0;
        for (int i = 1; i <= k; ++i) {
            const double inner = partial_return(batch, row, i, k) +
                                 batch.gamma_pow[k - i] * cache.q_online_logged[k] -
                                 cache.q_target_greedy[i];
            acc += 2.0 * batch.gamma_pow[k - i] * pos(inner);
        }
        g += w.lambda_ub * acc / k;
    }
    return g;
}

inline void accumulate_lql_gradient(const TrajectoryBatch& batch, const EvalCache& cache, int row,
                                    const HingeWeights& w, const QFunction& online,
                                    std::vector<double>& grads, double scale = 1.0) {
    if (cache.traces.size() != static_cast<std::size_t>(cache.valid_len))
        throw InvalidInput("accumulate_lql_gradient: cache built without traces");
    const int m = cache.valid_len;
    for (int k = 0; k < m; ++k) {
        const double coeff = lql_loss_grad(batch, cache, row, k, w) / m;
        online.accumulate_value_gradient(cache.traces[k], scale * coeff, grads);
    }
}

// grads += scale * d((Q_theta(s_k,a_k) - nstep target)^2)/dtheta.
inline void accumulate_nstep_gradient(const TrajectoryBatch& batch, const EvalCache& cache, int row,
                                      int k, int n, const QFunction& online, std::vector<double>& grads,
                                      double scale = 1.0) {
    if (cache.traces.size() != static_cast<std::size_t>(cache.valid_len))
        throw InvalidInput("accumulate_nstep_gradient: cache built without traces");
    const double coeff = nstep_td_loss_grad(batch, cache, row, k, n);
    online.accumulate_value_gradient(cache.traces[k], scale * coeff, grads);
}

}  // namespace lql

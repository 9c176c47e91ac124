#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "lql/mdp.hpp"
#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Batch of contiguous replayed segments.
//
// Row r holds up to L consecutive transitions of a single episode:
//   states  (L+1): s_0 .. s_{valid_len}, trailing entries masked
//   actions (L)  : a_0 .. a_{valid_len-1}
//   rewards (L)  : r_0 .. r_{valid_len-1}
//   prefix  (L+1): prefix[0] = 0, prefix[j] = sum_{u<j} gamma^u r_u
// so the discounted partial return G_{i:j} = (prefix[j] - prefix[i]) / gamma^i
// is available for every pair without re-summation. gamma_pow caches gamma^k
// so the same powers are used for prefixes and hinge discounting.
//
// Queries are answered through the algebraically identical tail form
//   G_{i:j} = tail[i] - gamma^{j-i} * tail[j],  tail[k] = r_k + gamma*tail[k+1]
// which anchors the discount at i instead of 0. The anchored-at-0 quotient
// loses all precision once gamma^i underflows against prefix rounding
// (gamma=0.5, i~60); the tail form keeps every operand well scaled.
// ---------------------------------------------------------------------------
struct TrajectoryBatch {
    int num_rows = 0;
    int L = 0;
    double gamma = 1.0;
    std::vector<int> states;          // num_rows x (L+1)
    std::vector<int> actions;         // num_rows x L
    std::vector<double> rewards;      // num_rows x L
    std::vector<int> valid_len;       // per row, in [1, L]
    std::vector<std::uint8_t> ends_terminal;  // per row: s_{valid_len} terminal?
    std::vector<std::int64_t> episode_ids;    // per row
    std::vector<double> prefix;       // num_rows x (L+1)
    std::vector<double> tail;         // num_rows x (L+1), tail[valid_len] = 0
    std::vector<double> gamma_pow;    // gamma^0 .. gamma^L

    int state(int row, int k) const { return states[static_cast<std::size_t>(row) * (L + 1) + k]; }
    int action(int row, int k) const { return actions[static_cast<std::size_t>(row) * L + k]; }
    double reward(int row, int k) const { return rewards[static_cast<std::size_t>(row) * L + k]; }
    int len(int row) const { return valid_len[row]; }
    bool terminal_end(int row) const { return ends_terminal[row] != 0; }
    double prefix_at(int row, int j) const { return prefix[static_cast<std::size_t>(row) * (L + 1) + j]; }
    double tail_at(int row, int j) const { return tail[static_cast<std::size_t>(row) * (L + 1) + j]; }
};

namespace detail {
inline std::vector<double> make_gamma_pow(double gamma, int L) {
    std::vector<double> g(L + 1);
    g[0] = 1.0;
    for (int k = 1; k <= L; ++k) g[k] = g[k - 1] * gamma;
    return g;
}
}  // namespace detail

// Build a batch directly from per-row transition slices (each slice must be a
// consecutive run within one episode). Used by samplers and by tests that
// need hand-constructed rows.
inline TrajectoryBatch make_batch(const std::vector<std::vector<Transition>>& rows, int L, double gamma) {
    if (L < 1) throw InvalidCall("make_batch: L must be >= 1");
    TrajectoryBatch b;
    b.num_rows = static_cast<int>(rows.size());
    b.L = L;
    b.gamma = gamma;
    b.gamma_pow = detail::make_gamma_pow(gamma, L);
    b.states.assign(static_cast<std::size_t>(b.num_rows) * (L + 1), 0);
    b.actions.assign(static_cast<std::size_t>(b.num_rows) * L, 0);
    b.rewards.assign(static_cast<std::size_t>(b.num_rows) * L, 0.0);
    b.valid_len.assign(b.num_rows, 0);
    b.ends_terminal.assign(b.num_rows, 0);
    b.episode_ids.assign(b.num_rows, 0);
    b.prefix.assign(static_cast<std::size_t>(b.num_rows) * (L + 1), 0.0);
    b.tail.assign(static_cast<std::size_t>(b.num_rows) * (L + 1), 0.0);

    for (int r = 0; r < b.num_rows; ++r) {
        const auto& seg = rows[r];
        const int m = static_cast<int>(seg.size());
        if (m < 1 || m > L) throw InvalidCall("make_batch: row length must lie in [1, L]");
        for (int k = 0; k < m; ++k) {
            if (k > 0 && (seg[k].episode_id != seg[0].episode_id ||
                          seg[k].step_index != seg[k - 1].step_index + 1 || seg[k].s != seg[k - 1].s_next))
                throw InvalidEpisode("make_batch: row is not a contiguous episode segment");
            b.states[static_cast<std::size_t>(r) * (L + 1) + k] = seg[k].s;
            b.actions[static_cast<std::size_t>(r) * L + k] = seg[k].a;
            b.rewards[static_cast<std::size_t>(r) * L + k] = seg[k].r;
            b.prefix[static_cast<std::size_t>(r) * (L + 1) + k + 1] =
                b.prefix[static_cast<std::size_t>(r) * (L + 1) + k] + b.gamma_pow[k] * seg[k].r;
        }
        for (int k = m; k-- > 0;)
            b.tail[static_cast<std::size_t>(r) * (L + 1) + k] =
                seg[k].r + gamma * b.tail[static_cast<std::size_t>(r) * (L + 1) + k + 1];
        b.states[static_cast<std::size_t>(r) * (L + 1) + m] = seg[m - 1].s_next;
        b.valid_len[r] = m;
        b.ends_terminal[r] = seg[m - 1].done ? 1 : 0;
        b.episode_ids[r] = seg[0].episode_id;
    }
    return b;
}

// G_{i:j} = sum_{u=i}^{j-1} gamma^{u-i} r_u = (prefix[j] - prefix[i]) / gamma^i,
// evaluated through the tail form (see TrajectoryBatch) for conditioning.
inline double partial_return(const TrajectoryBatch& b, int row, int i, int j) {
    if (row < 0 || row >= b.num_rows) throw InvalidIndices("partial_return: row out of range");
    if (i < 0 || j < i || j > b.len(row)) throw InvalidIndices("partial_return: need 0 <= i <= j <= valid_len");
    return b.tail_at(row, i) - b.gamma_pow[j - i] * b.tail_at(row, j);
}

// ---------------------------------------------------------------------------
// Replay buffer over whole episodes. Eviction is FIFO at whole-episode
// granularity so stored segments always remain contiguous.
// ---------------------------------------------------------------------------
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {
        if (capacity < 1) throw InvalidCall("ReplayBuffer: capacity must be >= 1");
    }

    std::int64_t size() const { return size_; }
    std::int64_t capacity() const { return capacity_; }
    bool empty() const { return size_ == 0; }

    // Append one episode (a contiguous prefix: step indices 0,1,2,...).
    void push_episode(std::vector<Transition> transitions) {
        if (transitions.empty()) throw InvalidEpisode("push_episode: empty episode");
        for (std::size_t k = 0; k < transitions.size(); ++k) {
            if (transitions[k].step_index != static_cast<std::int64_t>(k))
                throw InvalidEpisode("push_episode: step indices must be contiguous from 0");
            if (transitions[k].episode_id != transitions[0].episode_id)
                throw InvalidEpisode("push_episode: mixed episode ids");
            if (k > 0 && transitions[k].s != transitions[k - 1].s_next)
                throw InvalidEpisode("push_episode: states do not chain");
            if (transitions[k].done && k + 1 != transitions.size())
                throw InvalidEpisode("push_episode: done before final transition");
        }
        size_ += static_cast<std::int64_t>(transitions.size());
        episodes_.push_back(std::move(transitions));
        while (size_ > capacity_ && episodes_.size() > 1) {
            size_ -= static_cast<std::int64_t>(episodes_.front().size());
            episodes_.pop_front();
        }
        // A single episode larger than capacity is kept whole rather than split.
    }

    // Load a dataset (mdp-core CSV order) by grouping on episode_id.
    void push_dataset(const std::vector<Transition>& data) {
        std::vector<Transition> current;
        for (const Transition& t : data) {
            if (!current.empty() && t.episode_id != current.front().episode_id) {
                push_episode(std::move(current));
                current.clear();
            }
            current.push_back(t);
        }
        if (!current.empty()) push_episode(std::move(current));
    }

    // Uniform-start row extraction: start indices uniform over all stored
    // transitions; each row extends up to L steps or to its episode end.
    std::vector<std::vector<Transition>> sample_rows(int num_trajs, int L, Rng& rng) const {
        if (empty()) throw EmptyBuffer("sample_rows: buffer is empty");
        if (num_trajs < 1 || L < 1) throw InvalidCall("sample_rows: need num_trajs >= 1 and L >= 1");
        std::vector<std::vector<Transition>> rows;
        rows.reserve(num_trajs);
        for (int i = 0; i < num_trajs; ++i) {
            std::int64_t g = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::size_t>(size_)));
            std::size_t e = 0;
            while (g >= static_cast<std::int64_t>(episodes_[e].size())) {
                g -= static_cast<std::int64_t>(episodes_[e].size());
                ++e;
            }
            const auto& ep = episodes_[e];
            const int start = static_cast<int>(g);
            const int m = std::min(L, static_cast<int>(ep.size()) - start);
            rows.emplace_back(ep.begin() + start, ep.begin() + start + m);
        }
        return rows;
    }

    // Sample `num_trajs` rows of up to L consecutive transitions; rows never
    // cross episode boundaries (valid_len records early cuts).
    TrajectoryBatch sample_trajectories(int num_trajs, int L, double gamma, Rng& rng) const {
        return make_batch(sample_rows(num_trajs, L, rng), L, gamma);
    }

    const std::deque<std::vector<Transition>>& episodes() const { return episodes_; }

private:
    std::int64_t capacity_;
    std::int64_t size_ = 0;
    std::deque<std::vector<Transition>> episodes_;
};

}  // namespace lql

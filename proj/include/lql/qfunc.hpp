#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lql/util.hpp"

namespace lql {

// ---------------------------------------------------------------------------
// Feature maps for the linear representation
// ---------------------------------------------------------------------------
struct FeatureMap {
    int num_states = 0;
    int num_actions = 0;
    int dim = 0;
    std::vector<double> phi;  // (s * A + a) x dim, dense row-major

    const double* features(int s, int a) const {
        return phi.data() + (static_cast<std::size_t>(s) * num_actions + a) * dim;
    }

    // One-hot phi(s,a): the linear representation becomes exactly tabular.
    static FeatureMap one_hot(int num_states, int num_actions) {
        FeatureMap f;
        f.num_states = num_states;
        f.num_actions = num_actions;
        f.dim = num_states * num_actions;
        f.phi.assign(static_cast<std::size_t>(f.dim) * f.dim, 0.0);
        for (int i = 0; i < f.dim; ++i) f.phi[static_cast<std::size_t>(i) * f.dim + i] = 1.0;
        return f;
    }

    // Aliasing map: adjacent state pairs share one weight per action, with the
    // second state of each pair seen at twice the magnitude, plus a small
    // spillover onto the next pair's weight. States become irrecoverably
    // aliased, which off-policy bootstrapped updates can amplify.
    static FeatureMap aliased_pairs(int num_states, int num_actions) {
        FeatureMap f;
        f.num_states = num_states;
        f.num_actions = num_actions;
        const int groups = (num_states + 1) / 2;
        f.dim = groups * num_actions;
        f.phi.assign(static_cast<std::size_t>(num_states) * num_actions * f.dim, 0.0);
        for (int s = 0; s < num_states; ++s) {
            const int g = s / 2;
            const double mag = 1.0 + (s % 2);
            for (int a = 0; a < num_actions; ++a) {
                double* row = f.phi.data() + (static_cast<std::size_t>(s) * num_actions + a) * f.dim;
                row[g * num_actions + a] = mag;
                if (g + 1 < groups) row[(g + 1) * num_actions + a] = 0.5 * (s % 2);
            }
        }
        return f;
    }
};

// GELU and its derivative (exact erf form).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }
inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
    const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// Cached activations of one evaluation, enough to backpropagate without
// re-running the forward pass.
struct ForwardTrace {
    int s = -1;
    int a = -1;
    std::vector<double> z1, h1, z2, h2;  // MLP only
};

// ---------------------------------------------------------------------------
// Q-value representation: tabular table, linear-over-features, or a small MLP
// (2 hidden layers, GELU) with hand-written backpropagation. Every evaluation
// bumps eval_counter so compute-parity claims can be checked exactly.
// ---------------------------------------------------------------------------
class QFunction {
public:
    enum class Repr { Tabular, Linear, Mlp };

    static QFunction tabular(int num_states, int num_actions) {
        QFunction q;
        q.repr_ = Repr::Tabular;
        q.num_states_ = num_states;
        q.num_actions_ = num_actions;
        q.params_.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
        return q;
    }

    static QFunction tabular_from(int num_states, int num_actions, std::vector<double> table) {
        if (table.size() != static_cast<std::size_t>(num_states) * num_actions)
            throw InvalidInput("tabular_from: table shape mismatch");
        QFunction q = tabular(num_states, num_actions);
        q.params_ = std::move(table);
        return q;
    }

    static QFunction linear(FeatureMap features) {
        QFunction q;
        q.repr_ = Repr::Linear;
        q.num_states_ = features.num_states;
        q.num_actions_ = features.num_actions;
        q.params_.assign(features.dim, 0.0);
        q.features_ = std::move(features);
        return q;
    }

    // He-style init: weights ~ N(0, 2/fan_in), biases 0.
    static QFunction mlp(int num_states, int num_actions, int hidden, std::uint64_t seed) {
        QFunction q;
        q.repr_ = Repr::Mlp;
        q.num_states_ = num_states;
        q.num_actions_ = num_actions;
        q.hidden_ = hidden;
        const int in = num_states + num_actions;
        q.params_.assign(static_cast<std::size_t>(hidden) * in + hidden +
                             static_cast<std::size_t>(hidden) * hidden + hidden + hidden + 1,
                         0.0);
        Rng rng(seed);
        double* w1 = q.w1();
        const double s1 = std::sqrt(2.0 / in);
        for (int i = 0; i < hidden * in; ++i) w1[i] = s1 * normal01(rng);
        double* w2 = q.w2();
        const double s2 = std::sqrt(2.0 / hidden);
        for (int i = 0; i < hidden * hidden; ++i) w2[i] = s2 * normal01(rng);
        double* w3 = q.w3();
        for (int i = 0; i < hidden; ++i) w3[i] = s2 * normal01(rng);
        return q;
    }

    Repr repr() const { return repr_; }
    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    std::size_t num_params() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::uint64_t eval_count() const { return eval_counter_; }
    void reset_eval_count() { eval_counter_ = 0; }

    double evaluate(int s, int a) const {
        check_input(s, a);
        ++eval_counter_;
        return forward(s, a, nullptr);
    }

    double evaluate_traced(int s, int a, ForwardTrace& trace) const {
        check_input(s, a);
        ++eval_counter_;
        trace.s = s;
        trace.a = a;
        return forward(s, a, &trace);
    }

    // Argmax over actions, ties to the lowest id. Counts num_actions
    // evaluations (one per candidate action).
    int greedy_action(int s) const {
        if (s < 0 || s >= num_states_) throw InvalidInput("greedy_action: state out of range");
        eval_counter_ += static_cast<std::uint64_t>(num_actions_);
        int best = 0;
        double best_q = forward(s, 0, nullptr);
        for (int a = 1; a < num_actions_; ++a) {
            const double q = forward(s, a, nullptr);
            if (q > best_q) {
                best_q = q;
                best = a;
            }
        }
        return best;
    }

    // grads += coeff * dQ(s,a)/dtheta, reusing the cached forward activations.
    void accumulate_value_gradient(const ForwardTrace& trace, double coeff,
                                   std::vector<double>& grads) const {
        if (grads.size() != params_.size()) throw InvalidInput("gradient buffer shape mismatch");
        switch (repr_) {
            case Repr::Tabular:
                grads[static_cast<std::size_t>(trace.s) * num_actions_ + trace.a] += coeff;
                return;
            case Repr::Linear: {
                const double* f = features_.features(trace.s, trace.a);
                for (int i = 0; i < features_.dim; ++i) grads[i] += coeff * f[i];
                return;
            }
            case Repr::Mlp: {
                const int H = hidden_, in = num_states_ + num_actions_;
                const double* W2 = w2();
                const double* W3 = w3();
                double* gW1 = grads.data();
                double* gB1 = grads.data() + static_cast<std::size_t>(H) * in;
                double* gW2 = gB1 + H;
                double* gB2 = gW2 + static_cast<std::size_t>(H) * H;
                double* gW3 = gB2 + H;
                double* gB3 = gW3 + H;
                // output layer
                for (int i = 0; i < H; ++i) gW3[i] += coeff * trace.h2[i];
                gB3[0] += coeff;
                // hidden layer 2
                std::vector<double> dz2(H);
                for (int i = 0; i < H; ++i) dz2[i] = coeff * W3[i] * gelu_grad(trace.z2[i]);
                for (int i = 0; i < H; ++i) {
                    gB2[i] += dz2[i];
                    double* row = gW2 + static_cast<std::size_t>(i) * H;
                    for (int j = 0; j < H; ++j) row[j] += dz2[i] * trace.h1[j];
                }
                // hidden layer 1 (input is one-hot(s) ++ one-hot(a))
                std::vector<double> dz1(H, 0.0);
                for (int j = 0; j < H; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < H; ++i) acc += W2[static_cast<std::size_t>(i) * H + j] * dz2[i];
                    dz1[j] = acc * gelu_grad(trace.z1[j]);
                }
                for (int j = 0; j < H; ++j) {
                    gB1[j] += dz1[j];
                    gW1[static_cast<std::size_t>(j) * in + trace.s] += dz1[j];
                    gW1[static_cast<std::size_t>(j) * in + num_states_ + trace.a] += dz1[j];
                }
                return;
            }
        }
    }

    // theta <- theta - lr * grads (plain gradient step).
    void apply_gradient(const std::vector<double>& grads, double lr) {
        if (grads.size() != params_.size()) throw InvalidInput("apply_gradient: shape mismatch");
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grads[i];
    }

    // Checkpoint: shape header line then one parameter per line. %.17g
    // round-trips IEEE doubles exactly.
    void save_params(std::ostream& os) const {
        os << repr_name() << ' ' << num_states_ << ' ' << num_actions_ << ' ' << hidden_ << ' '
           << params_.size() << '\n';
        char buf[64];
        for (double p : params_) {
            std::snprintf(buf, sizeof(buf), "%.17g", p);
            os << buf << '\n';
        }
    }

    void load_params(std::istream& is) {
        std::string name;
        int s = 0, a = 0, h = 0;
        std::size_t n = 0;
        if (!(is >> name >> s >> a >> h >> n)) throw InvalidInput("checkpoint: bad header");
        if (name != repr_name() || s != num_states_ || a != num_actions_ || h != hidden_ ||
            n != params_.size())
            throw InvalidInput("checkpoint: shape header mismatch");
        for (std::size_t i = 0; i < n; ++i)
            if (!(is >> params_[i])) throw InvalidInput("checkpoint: truncated parameters");
    }

    double max_abs_param_value() const {
        // Largest |Q| over the state-action space (exact for tabular; by
        // evaluation sweep otherwise). Does not touch eval_counter.
        double m = 0.0;
        for (int s = 0; s < num_states_; ++s)
            for (int a = 0; a < num_actions_; ++a) m = std::max(m, std::abs(forward(s, a, nullptr)));
        return m;
    }

    double max_value() const {
        double m = -1e300;
        for (int s = 0; s < num_states_; ++s)
            for (int a = 0; a < num_actions_; ++a) m = std::max(m, forward(s, a, nullptr));
        return m;
    }

    double mean_value() const {
        double acc = 0.0;
        for (int s = 0; s < num_states_; ++s)
            for (int a = 0; a < num_actions_; ++a) acc += forward(s, a, nullptr);
        return acc / (static_cast<double>(num_states_) * num_actions_);
    }

private:
    std::string repr_name() const {
        switch (repr_) {
            case Repr::Tabular: return "tabular";
            case Repr::Linear: return "linear";
            case Repr::Mlp: return "mlp";
        }
        return "?";
    }

    void check_input(int s, int a) const {
        if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
            throw InvalidInput("evaluate: state/action out of range");
    }

    double forward(int s, int a, ForwardTrace* trace) const {
        switch (repr_) {
            case Repr::Tabular:
                return params_[static_cast<std::size_t>(s) * num_actions_ + a];
            case Repr::Linear: {
                const double* f = features_.features(s, a);
                double acc = 0.0;
                for (int i = 0; i < features_.dim; ++i) acc += params_[i] * f[i];
                return acc;
            }
            case Repr::Mlp: {
                const int H = hidden_, in = num_states_ + num_actions_;
                const double* W1 = w1();
                const double* B1 = b1();
                std::vector<double> z1(H), h1v(H), z2(H), h2v(H);
                for (int i = 0; i < H; ++i) {
                    const double* row = W1 + static_cast<std::size_t>(i) * in;
                    z1[i] = row[s] + row[num_states_ + a] + B1[i];
                    h1v[i] = gelu(z1[i]);
                }
                const double* W2 = w2();
                const double* B2 = b2();
                for (int i = 0; i < H; ++i) {
                    const double* row = W2 + static_cast<std::size_t>(i) * H;
                    double acc = B2[i];
                    for (int j = 0; j < H; ++j) acc += row[j] * h1v[j];
                    z2[i] = acc;
                    h2v[i] = gelu(acc);
                }
                const double* W3 = w3();
                double out = b3();
                for (int i = 0; i < H; ++i) out += W3[i] * h2v[i];
                if (trace) {
                    trace->z1 = std::move(z1);
                    trace->h1 = std::move(h1v);
                    trace->z2 = std::move(z2);
                    trace->h2 = std::move(h2v);
                }
                return out;
            }
        }
        return 0.0;
    }

    // Flat parameter layout: [W1 (HxIn), b1 (H), W2 (HxH), b2 (H), W3 (H), b3 (1)]
    double* w1() { return params_.data(); }
    const double* w1() const { return params_.data(); }
    const double* b1() const { return params_.data() + static_cast<std::size_t>(hidden_) * (num_states_ + num_actions_); }
    double* w2() {
        return params_.data() + static_cast<std::size_t>(hidden_) * (num_states_ + num_actions_) + hidden_;
    }
    const double* w2() const {
        return params_.data() + static_cast<std::size_t>(hidden_) * (num_states_ + num_actions_) + hidden_;
    }
    const double* b2() const { return w2() + static_cast<std::size_t>(hidden_) * hidden_; }
    double* w3() { return const_cast<double*>(b2() + hidden_); }
    const double* w3() const { return b2() + hidden_; }
    double b3() const { return *(w3() + hidden_); }

    Repr repr_ = Repr::Tabular;
    int num_states_ = 0;
    int num_actions_ = 0;
    int hidden_ = 0;
    std::vector<double> params_;
    FeatureMap features_;
    mutable std::uint64_t eval_counter_ = 0;
};

// Online network plus its slowly tracking target copy.
struct TargetPair {
    QFunction online;
    QFunction target;
    double tau = 5e-3;

    TargetPair(QFunction q, double tau_) : online(q), target(std::move(q)), tau(tau_) {
        if (tau <= 0.0 || tau > 1.0) throw InvalidInput("TargetPair: tau must lie in (0, 1]");
    }
};

// Polyak mix: target <- tau * online + (1 - tau) * target. tau=1 is a copy.
inline void soft_update(TargetPair& pair) {
    auto& t = pair.target.params();
    const auto& o = pair.online.params();
    if (t.size() != o.size()) throw InvalidInput("soft_update: shape mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = pair.tau * o[i] + (1.0 - pair.tau) * t[i];
}

// Adam, from the published update equations:
//   m_t = b1 m_{t-1} + (1-b1) g,  v_t = b2 v_{t-1} + (1-b2) g^2
//   theta -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)
class Adam {
public:
    Adam(std::size_t dim, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps), m_(dim, 0.0), v_(dim, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw InvalidInput("Adam: shape mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace lql

#pragma once

// Iterative lower-bound optimization learner: a deterministic policy network
// improved with the sampled, baseline-subtracted lower-bound gradient
//
//   g = 1/m sum_i grad_theta mu(s_i) [grad_a r(s_i, a)
//                                     + gamma grad_a ln T(s_i, a, s'_i) (V(s'_i) - V(s_i))],  a = mu(s_i)
//
// with V(x) = Q'(x, mu'(x)) from the target networks, and a critic trained on
// bootstrapped TD targets from a large replay store. The policy samples come
// from a small store of recent (approximately on-policy) transitions.

#include "ilbo/checkpoint.hpp"
#include "ilbo/diffnet.hpp"
#include "ilbo/domains.hpp"
#include "ilbo/metrics.hpp"

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ilbo {

// ---------------------------------------------------------------------------
// Replay store

/// Bounded FIFO of transitions; sampling is uniform with replacement.
class ReplayStore {
public:
    explicit ReplayStore(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayStore: capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    /// i = 0 is the oldest entry.
    const Transition& at(std::size_t i) const {
        if (i >= data_.size()) throw std::out_of_range("ReplayStore::at");
        return data_[(head_ + i) % data_.size()];
    }

    std::vector<Transition> sample(std::size_t n, Rng& rng) const {
        if (data_.empty()) throw std::logic_error("ReplayStore: sampling from an empty store");
        std::uniform_int_distribution<std::size_t> U(0, data_.size() - 1);
        std::vector<Transition> out;
        out.reserve(n);
        for (std::size_t k = 0; k < n; ++k) out.push_back(data_[U(rng)]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // oldest entry once full
    std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Configuration

inline std::vector<std::size_t> parse_layers(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& p : split(s, ',')) {
        const auto v = parse_int(p);
        if (v <= 0) throw std::invalid_argument("layer widths must be positive: '" + s + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

inline std::string format_layers(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct AgentConfig {
    double q_lr = 0.001;
    double policy_lr = 0.0001;
    std::size_t q_store_capacity = 1'000'000;
    std::size_t policy_store_capacity = 1'000;
    std::size_t minibatch_q = 64;
    std::size_t minibatch_policy = 64;
    double tau = 0.005;
    double gamma = 0.99;
    double noise_sigma0 = 0.2;
    double noise_sigma_min = 0.01;
    double noise_decay = 0.999;
    std::vector<std::size_t> policy_hidden{256, 128, 64, 32};
    std::vector<std::size_t> q_hidden{256, 128, 64, 32};
    bool layer_norm = true;
    std::size_t encoder_state_width = 32;
    std::size_t encoder_action_width = 32;
    /// Use V(s') - V(s) in the policy gradient (false: V(s') alone).
    bool baseline = true;

    void validate() const {
        if (!(q_lr > 0.0 && policy_lr > 0.0)) throw std::invalid_argument("AgentConfig: learning rates must be positive");
        if (minibatch_q == 0 || minibatch_policy == 0) throw std::invalid_argument("AgentConfig: zero minibatch");
        if (q_store_capacity < minibatch_q || policy_store_capacity < minibatch_policy)
            throw std::invalid_argument("AgentConfig: store capacity below its minibatch size");
        if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("AgentConfig: tau outside (0, 1]");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("AgentConfig: gamma outside (0, 1]");
        if (!(noise_sigma_min >= 0.0 && noise_sigma_min <= noise_sigma0))
            throw std::invalid_argument("AgentConfig: need 0 <= noise_sigma_min <= noise_sigma0");
        if (!(noise_decay > 0.0 && noise_decay <= 1.0)) throw std::invalid_argument("AgentConfig: noise_decay outside (0, 1]");
    }

    /// Accepts keys without the "agent." prefix; false for an unknown key.
    bool set(const std::string& k, const std::string& v) {
        if (k == "q_lr") q_lr = parse_double(v);
        else if (k == "policy_lr") policy_lr = parse_double(v);
        else if (k == "q_store_capacity") q_store_capacity = static_cast<std::size_t>(parse_int(v));
        else if (k == "policy_store_capacity") policy_store_capacity = static_cast<std::size_t>(parse_int(v));
        else if (k == "minibatch_q") minibatch_q = static_cast<std::size_t>(parse_int(v));
        else if (k == "minibatch_policy") minibatch_policy = static_cast<std::size_t>(parse_int(v));
        else if (k == "tau") tau = parse_double(v);
        else if (k == "gamma") gamma = parse_double(v);
        else if (k == "noise_sigma0") noise_sigma0 = parse_double(v);
        else if (k == "noise_sigma_min") noise_sigma_min = parse_double(v);
        else if (k == "noise_decay") noise_decay = parse_double(v);
        else if (k == "policy_hidden") policy_hidden = parse_layers(v);
        else if (k == "q_hidden") q_hidden = parse_layers(v);
        else if (k == "layer_norm") layer_norm = parse_int(v) != 0;
        else if (k == "encoder_state_width") encoder_state_width = static_cast<std::size_t>(parse_int(v));
        else if (k == "encoder_action_width") encoder_action_width = static_cast<std::size_t>(parse_int(v));
        else if (k == "baseline") baseline = parse_int(v) != 0;
        else return false;
        return true;
    }

    std::vector<std::pair<std::string, std::string>> to_kv() const {
        return {{"q_lr", format_double(q_lr)},
                {"policy_lr", format_double(policy_lr)},
                {"q_store_capacity", std::to_string(q_store_capacity)},
                {"policy_store_capacity", std::to_string(policy_store_capacity)},
                {"minibatch_q", std::to_string(minibatch_q)},
                {"minibatch_policy", std::to_string(minibatch_policy)},
                {"tau", format_double(tau)},
                {"gamma", format_double(gamma)},
                {"noise_sigma0", format_double(noise_sigma0)},
                {"noise_sigma_min", format_double(noise_sigma_min)},
                {"noise_decay", format_double(noise_decay)},
                {"policy_hidden", format_layers(policy_hidden)},
                {"q_hidden", format_layers(q_hidden)},
                {"layer_norm", layer_norm ? "1" : "0"},
                {"encoder_state_width", std::to_string(encoder_state_width)},
                {"encoder_action_width", std::to_string(encoder_action_width)},
                {"baseline", baseline ? "1" : "0"}};
    }
};

/// Affine map of raw vectors onto roughly [-1, 1] before they enter a network.
struct Normalizer {
    Vec center;
    Vec scale;

    static Normalizer identity(Eigen::Index n) { return {Vec::Zero(n), Vec::Ones(n)}; }
    static Normalizer from_box(const Vec& lo, const Vec& hi) { return {0.5 * (lo + hi), 0.5 * (hi - lo)}; }

    Mat apply(const Mat& rows) const {
        return (rows.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
    }
};

inline NetSpec policy_spec_for(const DomainModel& d, const AgentConfig& c) {
    NetSpec s;
    s.input_dim = d.state_dim();
    s.hidden_layers = c.policy_hidden;
    s.output_dim = d.action_dim();
    s.output = OutputActivation::bounded(d.action_lo(), d.action_hi());
    s.use_layer_norm = c.layer_norm;
    return s;
}

inline NetSpec critic_spec_for(const DomainModel& d, const AgentConfig& c) {
    NetSpec s;
    s.input_dim = d.state_dim() + d.action_dim();
    s.hidden_layers = c.q_hidden;
    s.output_dim = 1;
    s.use_layer_norm = c.layer_norm;
    s.encoder = Encoder{d.state_dim(), c.encoder_state_width, c.encoder_action_width};
    return s;
}

inline Mat stack_rows(const std::vector<Transition>& batch, Vec Transition::*field) {
    if (batch.empty()) return {};
    Mat m(static_cast<Eigen::Index>(batch.size()), (batch.front().*field).size());
    for (std::size_t i = 0; i < batch.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = (batch[i].*field).transpose();
    return m;
}

// ---------------------------------------------------------------------------
// Policy-gradient estimator

/// Value estimate for a batch of raw states (one per row).
using ValueFn = std::function<Vec(const Mat&)>;

struct PolicyGradientEstimate {
    Vec grad;                 // ascent direction in policy parameter space
    Mat action_terms;         // per-sample bracket term, zero rows for skipped samples
    Mat per_sample;           // per-sample parameter gradients (rows), if requested
    std::size_t used = 0;
    std::size_t skipped = 0;  // out-of-support transitions
};

/// Sampled lower-bound gradient over a batch; actions are re-evaluated at
/// mu_theta(s_i). Out-of-support transitions are dropped from the average.
inline PolicyGradientEstimate estimate_policy_gradient(const DomainModel& dom, const NetParams& policy,
                                                       const Normalizer& norm, const std::vector<Transition>& batch,
                                                       const ValueFn& value, double gamma, bool baseline = true,
                                                       bool keep_per_sample = false) {
    PolicyGradientEstimate est;
    const Eigen::Index P = policy.values.size();
    est.grad = Vec::Zero(P);
    if (batch.empty()) return est;
    const Mat S = stack_rows(batch, &Transition::state);
    const Mat S2 = stack_rows(batch, &Transition::next_state);
    const auto B = S.rows();
    auto fwd = net_forward(policy, norm.apply(S));
    const Vec v_next = value(S2);
    const Vec v_cur = baseline ? value(S) : Vec::Zero(B);
    est.action_terms = Mat::Zero(B, fwd.outputs.cols());
    std::vector<bool> ok(static_cast<std::size_t>(B), false);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& t = batch[static_cast<std::size_t>(i)];
        const Vec a = fwd.outputs.row(i).transpose();
        try {
            const Vec score = dom.log_trans_grad_action(t.state, a, t.next_state);
            const Vec term = dom.reward_grad_action(t.state, a) + gamma * score * (v_next(i) - v_cur(i));
            if (!term.allFinite()) throw OutOfSupport("non-finite gradient term");
            est.action_terms.row(i) = term.transpose();
            ok[static_cast<std::size_t>(i)] = true;
            ++est.used;
        } catch (const OutOfSupport&) {
            ++est.skipped;
        }
    }
    if (est.used == 0) return est;
    est.grad = net_backward(policy, fwd.cache, est.action_terms / static_cast<double>(est.used)).param_grad;
    if (keep_per_sample) {
        est.per_sample = Mat::Zero(B, P);
        const Mat X = norm.apply(S);
        for (Eigen::Index i = 0; i < B; ++i) {
            if (!ok[static_cast<std::size_t>(i)]) continue;
            auto one = net_forward(policy, X.row(i));
            est.per_sample.row(i) = net_backward(policy, one.cache, est.action_terms.row(i)).param_grad.transpose();
        }
    }
    return est;
}

// ---------------------------------------------------------------------------
// Agent

struct EpisodeMetrics {
    double total_reward = 0.0;
    double td_loss_sum = 0.0;
    double grad_norm_sum = 0.0;
    std::size_t updates = 0;
    std::size_t skipped = 0;
    int steps = 0;
};

struct EvalResult {
    double mean_return = 0.0;
    double std_return = 0.0;
    std::vector<double> returns;
};

struct PolicyUpdateResult {
    double grad_norm = 0.0;
    std::size_t skipped = 0;
};

class Agent {
public:
    Agent(DomainPtr domain, AgentConfig config, std::uint64_t seed)
        : domain_(std::move(domain)), config_(std::move(config)) {
        if (!domain_) throw std::invalid_argument("Agent: null domain");
        config_.validate();
        policy_ = net_init(policy_spec_for(*domain_, config_), mix_seed(seed ^ 0x70));
        critic_ = net_init(critic_spec_for(*domain_, config_), mix_seed(seed ^ 0x51));
        policy_target_ = policy_;
        critic_target_ = critic_;
        init_runtime_state();
    }

    /// Restore from a checkpoint written by to_checkpoint(); stores start empty.
    Agent(DomainPtr domain, const Checkpoint& ck) : domain_(std::move(domain)) {
        if (!domain_) throw std::invalid_argument("Agent: null domain");
        for (const auto& [k, v] : ck.meta)
            if (k.rfind("agent.", 0) == 0 && !config_.set(k.substr(6), v))
                throw std::runtime_error("checkpoint: unknown agent key '" + k + "'");
        config_.validate();
        if (auto d = ck.find_meta("domain"); !d || *d != domain_->name())
            throw std::runtime_error("checkpoint was written for a different domain");
        policy_ = ck.network("policy");
        critic_ = ck.network("critic");
        policy_target_ = ck.network("policy_target");
        critic_target_ = ck.network("critic_target");
        if (!(policy_.spec == policy_spec_for(*domain_, config_)) || !(critic_.spec == critic_spec_for(*domain_, config_)) ||
            !(policy_target_.spec == policy_.spec) || !(critic_target_.spec == critic_.spec))
            throw std::runtime_error("checkpoint networks do not match the domain/config");
        init_runtime_state();
        if (auto e = ck.find_meta("episodes")) episodes_ = static_cast<std::size_t>(parse_int(*e));
        if (auto s = ck.find_meta("sigma")) sigma_ = parse_double(*s);
    }

    Checkpoint to_checkpoint(const std::vector<std::pair<std::string, std::string>>& extra_meta = {}) const {
        Checkpoint ck;
        ck.meta.emplace_back("domain", domain_->name());
        for (auto& [k, v] : config_.to_kv()) ck.meta.emplace_back("agent." + k, v);
        ck.meta.emplace_back("episodes", std::to_string(episodes_));
        ck.meta.emplace_back("sigma", format_double(sigma_));
        for (const auto& kv : extra_meta) ck.meta.push_back(kv);
        ck.networks = {{"policy", policy_}, {"critic", critic_}, {"policy_target", policy_target_},
                       {"critic_target", critic_target_}};
        return ck;
    }

    const DomainModel& domain() const { return *domain_; }
    DomainPtr domain_ptr() const { return domain_; }
    const AgentConfig& config() const { return config_; }
    const NetParams& policy() const { return policy_; }
    const NetParams& critic() const { return critic_; }
    const NetParams& policy_target() const { return policy_target_; }
    const NetParams& critic_target() const { return critic_target_; }
    NetParams& mutable_policy() { return policy_; }
    NetParams& mutable_critic() { return critic_; }
    NetParams& mutable_policy_target() { return policy_target_; }
    NetParams& mutable_critic_target() { return critic_target_; }
    const ReplayStore& q_store() const { return q_store_; }
    const ReplayStore& policy_store() const { return policy_store_; }
    std::size_t episodes() const { return episodes_; }
    double sigma() const { return sigma_; }
    void set_sigma(double s) { sigma_ = s; }
    const Normalizer& state_norm() const { return state_norm_; }

    /// Deterministic policy action for a batch of raw states.
    Mat policy_actions(const Mat& states, bool target = false) const {
        return net_predict(target ? policy_target_ : policy_, state_norm_.apply(states));
    }

    Vec critic_values(const Mat& states, const Mat& actions, bool target = false) const {
        return net_predict(target ? critic_target_ : critic_, critic_input(states, actions)).col(0);
    }

    /// V(x) = Q'(x, mu'(x)) from the target networks.
    Vec target_value(const Mat& states) const { return critic_values(states, policy_actions(states, true), true); }

    Vec act(const Vec& state, bool explore, Rng& rng) const {
        if (!state.allFinite()) throw std::domain_error("act: non-finite state");
        Vec a = policy_actions(state.transpose()).row(0).transpose();
        if (explore && sigma_ > 0.0) {
            const Vec half = 0.5 * (domain_->action_hi() - domain_->action_lo());
            std::normal_distribution<double> N(0.0, 1.0);
            for (Eigen::Index j = 0; j < a.size(); ++j) a(j) += sigma_ * half(j) * N(rng);
        }
        return domain_->clamp_action(a);
    }

    /// One Adam step on the mean squared TD error; returns the pre-step loss.
    double critic_update(const std::vector<Transition>& batch) {
        if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
        const Mat S = stack_rows(batch, &Transition::state);
        const Mat A = stack_rows(batch, &Transition::action);
        const Mat S2 = stack_rows(batch, &Transition::next_state);
        Vec y = target_value(S2) * config_.gamma;
        for (std::size_t i = 0; i < batch.size(); ++i) y(static_cast<Eigen::Index>(i)) += batch[i].reward;
        auto fwd = net_forward(critic_, critic_input(S, A));
        const Vec resid = y - fwd.outputs.col(0);
        const double n = static_cast<double>(batch.size());
        const double loss = resid.squaredNorm() / n;
        if (!std::isfinite(loss)) throw std::domain_error("critic_update: non-finite TD loss");
        const Mat dout = (-2.0 / n) * resid;
        const Vec g = net_backward(critic_, fwd.cache, dout).param_grad;
        adam_step(critic_adam_, critic_, g, config_.q_lr);
        return loss;
    }

    PolicyGradientEstimate policy_gradient(const std::vector<Transition>& batch, bool keep_per_sample = false) const {
        return estimate_policy_gradient(*domain_, policy_, state_norm_, batch,
                                        [this](const Mat& s) { return target_value(s); }, config_.gamma,
                                        config_.baseline, keep_per_sample);
    }

    /// One Adam ascent step along the sampled lower-bound gradient.
    PolicyUpdateResult policy_update(const std::vector<Transition>& batch) {
        auto est = policy_gradient(batch);
        PolicyUpdateResult r{est.grad.norm(), est.skipped};
        if (est.used > 0) adam_step(policy_adam_, policy_, -est.grad, config_.policy_lr);
        return r;
    }

    void update_targets() {
        critic_target_ = soft_update(std::move(critic_target_), critic_, config_.tau);
        policy_target_ = soft_update(std::move(policy_target_), policy_, config_.tau);
    }

    EpisodeMetrics run_episode(Rng& rng) {
        EpisodeMetrics m;
        Vec s = reset(*domain_, rng);
        for (int t = 0; t < domain_->horizon(); ++t) {
            const Vec a = act(s, true, rng);
            auto r = step(*domain_, s, a, rng);
            Transition tr{s, a, r.reward, r.next_state, false};
            q_store_.push(tr);
            policy_store_.push(std::move(tr));
            m.total_reward += r.reward;
            if (q_store_.size() >= config_.minibatch_q) {
                m.td_loss_sum += critic_update(q_store_.sample(config_.minibatch_q, rng));
                auto pu = policy_update(
                    policy_store_.sample(std::min(config_.minibatch_policy, policy_store_.size()), rng));
                m.grad_norm_sum += pu.grad_norm;
                m.skipped += pu.skipped;
                ++m.updates;
            }
            update_targets();
            s = std::move(r.next_state);
            ++m.steps;
        }
        sigma_ = std::max(config_.noise_sigma_min, sigma_ * config_.noise_decay);
        ++episodes_;
        return m;
    }

    /// Noise-free rollouts; returns are undiscounted reward sums over the horizon.
    /// Start states cycle through init_states (domain default when empty).
    EvalResult evaluate(std::size_t n_traj, const std::vector<Vec>& init_states, Rng& rng) const {
        if (n_traj == 0) throw std::invalid_argument("evaluate: n_traj must be at least 1");
        EvalResult r;
        PolicyFn pi = [this](const Vec& s) { return Vec(policy_actions(s.transpose()).row(0).transpose()); };
        for (std::size_t k = 0; k < n_traj; ++k) {
            const Vec s0 = init_states.empty() ? domain_->default_init_state()
                                               : reset(*domain_, rng, init_states[k % init_states.size()]);
            r.returns.push_back(rollout(*domain_, pi, rng, s0).total_reward());
        }
        // Shifted by the first return, so identical returns give exactly zero spread.
        const double n = static_cast<double>(n_traj), x0 = r.returns.front();
        double dsum = 0.0;
        for (double x : r.returns) dsum += x - x0;
        const double dmean = dsum / n;
        double ss = 0.0;
        for (double x : r.returns) ss += (x - x0 - dmean) * (x - x0 - dmean);
        r.mean_return = x0 + dmean;
        r.std_return = std::sqrt(ss / n);
        return r;
    }

private:
    void init_runtime_state() {
        policy_adam_ = AdamState(policy_.values.size());
        critic_adam_ = AdamState(critic_.values.size());
        q_store_ = ReplayStore(config_.q_store_capacity);
        policy_store_ = ReplayStore(config_.policy_store_capacity);
        state_norm_ = Normalizer::from_box(domain_->state_lo(), domain_->state_hi());
        action_norm_ = Normalizer::from_box(domain_->action_lo(), domain_->action_hi());
        sigma_ = config_.noise_sigma0;
        episodes_ = 0;
    }

    Mat critic_input(const Mat& states, const Mat& actions) const {
        Mat x(states.rows(), states.cols() + actions.cols());
        x << state_norm_.apply(states), action_norm_.apply(actions);
        return x;
    }

    DomainPtr domain_;
    AgentConfig config_;
    NetParams policy_, critic_, policy_target_, critic_target_;
    AdamState policy_adam_, critic_adam_;
    ReplayStore q_store_{1};
    ReplayStore policy_store_{1};
    Normalizer state_norm_, action_norm_;
    double sigma_ = 0.0;
    std::size_t episodes_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainOptions {
    std::size_t episodes = 5000;
    std::size_t eval_every = 50;
    std::size_t eval_trajectories = 64;
    std::int64_t seed = 0;
};

/// Called after each evaluation point with the new record; `improved` is set
/// when its evaluation mean beat every earlier one.
using EvalCallback = std::function<void(const RunRecord&, const Agent&, bool improved)>;

/// Training and evaluation draw from disjoint random streams, so evaluation
/// trajectories never feed the stores.
inline std::vector<RunRecord> train(Agent& agent, const TrainOptions& opt, const EvalCallback& on_eval = {}) {
    if (opt.episodes == 0) throw std::invalid_argument("train: episodes must be at least 1");
    if (opt.eval_every == 0) throw std::invalid_argument("train: eval_every must be at least 1");
    const auto seed = static_cast<std::uint64_t>(opt.seed);
    Rng train_rng = make_rng(seed, 0x7a);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<RunRecord> records;
    double td = 0.0, gn = 0.0;
    std::size_t updates = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t ep = 1; ep <= opt.episodes; ++ep) {
        const auto m = agent.run_episode(train_rng);
        td += m.td_loss_sum;
        gn += m.grad_norm_sum;
        updates += m.updates;
        if (ep % opt.eval_every != 0) continue;
        Rng eval_rng = make_rng(seed ^ 0xe7a1ULL, ep);
        const auto ev = agent.evaluate(opt.eval_trajectories, {}, eval_rng);
        const bool improved = ev.mean_return > best;
        if (improved) best = ev.mean_return;
        RunRecord r;
        r.seed = opt.seed;
        r.episode = static_cast<std::int64_t>(ep);
        r.eval_mean = ev.mean_return;
        r.eval_std = ev.std_return;
        r.best_mean = best;
        r.td_loss = updates ? td / static_cast<double>(updates) : 0.0;
        r.grad_norm = updates ? gn / static_cast<double>(updates) : 0.0;
        r.sigma = agent.sigma();
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        records.push_back(r);
        if (on_eval) on_eval(r, agent, improved);
        td = gn = 0.0;
        updates = 0;
    }
    return records;
}

}  // namespace ilbo

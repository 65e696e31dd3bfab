#pragma once

// Known-model stochastic benchmark domains (nav2, hvac6, res20) with exact
// action gradients of the reward and of the log transition density.
//
// All transitions factor per next-state coordinate given (s, a). step()
// clamps the action into the action box and the sampled next state into the
// state box; the density used by the log-density routines is the unclamped
// factored density evaluated at whatever next state is supplied.

#include "ilbo/types.hpp"

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ilbo {

/// Raised when a next state has zero density under T(s, a, .).
class OutOfSupport : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Transition {
    Vec state;
    Vec action;
    double reward = 0.0;
    Vec next_state;
    bool terminal = false;
};

struct Trajectory {
    Vec start;
    std::vector<Transition> steps;

    double total_reward() const {
        double sum = 0.0;
        for (const auto& t : steps) sum += t.reward;
        return sum;
    }
};

struct StepResult {
    Vec next_state;
    double reward = 0.0;
};

class DomainModel {
public:
    virtual ~DomainModel() = default;

    virtual std::string name() const = 0;

    std::size_t state_dim() const { return static_cast<std::size_t>(state_lo_.size()); }
    std::size_t action_dim() const { return static_cast<std::size_t>(action_lo_.size()); }
    const Vec& action_lo() const { return action_lo_; }
    const Vec& action_hi() const { return action_hi_; }
    const Vec& state_lo() const { return state_lo_; }
    const Vec& state_hi() const { return state_hi_; }
    /// Box that reset() samples from when asked for a random feasible start.
    const Vec& sample_lo() const { return sample_lo_; }
    const Vec& sample_hi() const { return sample_hi_; }
    int horizon() const { return horizon_; }
    double gamma() const { return gamma_; }
    const Vec& default_init_state() const { return init_; }

    virtual double reward(const Vec& s, const Vec& a) const = 0;
    virtual Vec reward_grad_action(const Vec& s, const Vec& a) const = 0;

    /// Unclamped sample of s' ~ T(s, a, .) for an in-box action.
    virtual Vec sample_next(const Vec& s, const Vec& a, Rng& rng) const = 0;

    /// ln T(s, a, s'); -inf outside the support.
    virtual double log_trans_density(const Vec& s, const Vec& a, const Vec& next) const = 0;

    /// d/da ln T(s, a, s'); throws OutOfSupport outside the support.
    virtual Vec log_trans_grad_action(const Vec& s, const Vec& a, const Vec& next) const = 0;

    /// Marginal density of next-state coordinate j at x (factored model).
    virtual double coord_density(std::size_t j, const Vec& s, const Vec& a, double x) const = 0;

    /// Interval holding all but a negligible tail of coordinate j's density.
    virtual std::pair<double, double> coord_support(std::size_t j, const Vec& s, const Vec& a) const = 0;

    Vec clamp_action(const Vec& a) const { return a.cwiseMax(action_lo_).cwiseMin(action_hi_); }
    Vec clamp_state(const Vec& s) const { return s.cwiseMax(state_lo_).cwiseMin(state_hi_); }

    bool in_state_box(const Vec& s) const {
        return s.size() == state_lo_.size() && (s.array() >= state_lo_.array()).all() &&
               (s.array() <= state_hi_.array()).all();
    }

protected:
    void set_boxes(Vec action_lo, Vec action_hi, Vec state_lo, Vec state_hi, Vec sample_lo, Vec sample_hi) {
        action_lo_ = std::move(action_lo);
        action_hi_ = std::move(action_hi);
        state_lo_ = std::move(state_lo);
        state_hi_ = std::move(state_hi);
        sample_lo_ = std::move(sample_lo);
        sample_hi_ = std::move(sample_hi);
    }
    void set_episode(int horizon, double gamma, Vec init) {
        if (horizon <= 0) throw std::invalid_argument(name() + ": horizon must be positive");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument(name() + ": gamma outside (0, 1]");
        horizon_ = horizon;
        gamma_ = gamma;
        init_ = std::move(init);
        if (!(action_lo_.array() < action_hi_.array()).all())
            throw std::invalid_argument(name() + ": action box needs lo < hi");
        if (!in_state_box(init_)) throw std::invalid_argument(name() + ": default start state outside the state box");
    }

private:
    Vec action_lo_, action_hi_, state_lo_, state_hi_, sample_lo_, sample_hi_, init_;
    int horizon_ = 40;
    double gamma_ = 0.99;
};

using DomainPtr = std::shared_ptr<const DomainModel>;

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double gauss_logpdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw std::domain_error(std::string(what) + " is not finite");
}

template <class Params>
void apply_overrides(Params& p, const std::map<std::string, std::string>& ov, const std::string& prefix) {
    for (const auto& [k, v] : ov) {
        if (k.rfind(prefix + ".", 0) != 0) continue;
        const std::string key = k.substr(prefix.size() + 1);
        if (!p.set(key, v)) throw std::invalid_argument("unknown domain parameter '" + k + "'");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Navigation: 2-d point robot, deceleration zone around `center`.

struct NavigationParams {
    double alpha = 2.0;
    Vec center = Vec::Constant(2, 5.0);
    Vec goal = (Vec(2) << 8.0, 9.0).finished();
    double sigma = 0.05;
    double action_cost = 0.01;
    double box_lo = 0.0;
    double box_hi = 10.0;
    int horizon = 40;
    double gamma = 0.99;
    Vec init = Vec::Constant(2, 1.0);

    bool set(const std::string& k, const std::string& v) {
        if (k == "alpha") alpha = parse_double(v);
        else if (k == "center") center = parse_vector(v);
        else if (k == "goal") goal = parse_vector(v);
        else if (k == "sigma") sigma = parse_double(v);
        else if (k == "action_cost") action_cost = parse_double(v);
        else if (k == "horizon") horizon = static_cast<int>(parse_int(v));
        else if (k == "gamma") gamma = parse_double(v);
        else if (k == "init") init = parse_vector(v);
        else return false;
        return true;
    }
};

class Navigation final : public DomainModel {
public:
    explicit Navigation(NavigationParams p = {}) : p_(std::move(p)) {
        if (p_.center.size() != 2 || p_.goal.size() != 2 || p_.init.size() != 2)
            throw std::invalid_argument("nav2: center/goal/init must be 2-vectors");
        if (!(p_.sigma > 0.0)) throw std::invalid_argument("nav2: sigma must be positive");
        set_boxes(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0), Vec::Constant(2, p_.box_lo), Vec::Constant(2, p_.box_hi),
                  Vec::Constant(2, p_.box_lo), Vec::Constant(2, p_.box_hi));
        set_episode(p_.horizon, p_.gamma, p_.init);
    }

    std::string name() const override { return "nav2"; }
    const NavigationParams& params() const { return p_; }

    /// lambda(s) = 2 / (1 + exp(-alpha * |s - c|)) - 1, zero at the zone center.
    double deceleration(const Vec& s) const {
        return 2.0 / (1.0 + std::exp(-p_.alpha * (s - p_.center).norm())) - 1.0;
    }

    Vec mean(const Vec& s, const Vec& a) const { return clamp_state(s + deceleration(s) * a); }

    double reward(const Vec& s, const Vec& a) const override {
        return -(s - p_.goal).norm() - p_.action_cost * a.squaredNorm();
    }
    Vec reward_grad_action(const Vec&, const Vec& a) const override { return -2.0 * p_.action_cost * a; }

    Vec sample_next(const Vec& s, const Vec& a, Rng& rng) const override {
        std::normal_distribution<double> N(0.0, p_.sigma);
        Vec m = mean(s, a);
        for (Eigen::Index j = 0; j < m.size(); ++j) m(j) += N(rng);
        return m;
    }

    double log_trans_density(const Vec& s, const Vec& a, const Vec& next) const override {
        const Vec m = mean(s, a);
        double lp = 0.0;
        for (Eigen::Index j = 0; j < m.size(); ++j) lp += detail::gauss_logpdf(next(j), m(j), p_.sigma);
        return lp;
    }

    Vec log_trans_grad_action(const Vec& s, const Vec& a, const Vec& next) const override {
        const double lam = deceleration(s);
        const Vec raw = s + lam * a;
        const Vec m = clamp_state(raw);
        Vec g(2);
        for (Eigen::Index j = 0; j < 2; ++j) {
            const bool interior = raw(j) > state_lo()(j) && raw(j) < state_hi()(j);
            g(j) = interior ? lam * (next(j) - m(j)) / (p_.sigma * p_.sigma) : 0.0;
        }
        return g;
    }

    double coord_density(std::size_t j, const Vec& s, const Vec& a, double x) const override {
        return std::exp(detail::gauss_logpdf(x, mean(s, a)(static_cast<Eigen::Index>(j)), p_.sigma));
    }
    std::pair<double, double> coord_support(std::size_t j, const Vec& s, const Vec& a) const override {
        const double m = mean(s, a)(static_cast<Eigen::Index>(j));
        return {m - 12.0 * p_.sigma, m + 12.0 * p_.sigma};
    }

private:
    NavigationParams p_;
};

// ---------------------------------------------------------------------------
// HVAC: rooms on a line graph, heated-air actions.

struct HvacParams {
    std::size_t rooms = 6;
    double kappa_air = 0.05;
    double kappa_adj = 0.02;
    double kappa_out = 0.02;
    double temp_air = 40.0;
    double temp_out = 6.0;
    double sigma = 0.1;
    double comfort_lo = 20.0;
    double comfort_hi = 23.5;
    double air_cost = 1.0;
    double penalty = 20.0;
    double action_max = 10.0;
    double state_lo = -20.0;
    double state_hi = 60.0;
    double sample_lo = 0.0;
    double sample_hi = 30.0;
    int horizon = 40;
    double gamma = 0.99;
    Vec init = Vec::Constant(6, 10.0);

    bool set(const std::string& k, const std::string& v) {
        if (k == "kappa_air") kappa_air = parse_double(v);
        else if (k == "kappa_adj") kappa_adj = parse_double(v);
        else if (k == "kappa_out") kappa_out = parse_double(v);
        else if (k == "temp_air") temp_air = parse_double(v);
        else if (k == "temp_out") temp_out = parse_double(v);
        else if (k == "sigma") sigma = parse_double(v);
        else if (k == "comfort_lo") comfort_lo = parse_double(v);
        else if (k == "comfort_hi") comfort_hi = parse_double(v);
        else if (k == "air_cost") air_cost = parse_double(v);
        else if (k == "penalty") penalty = parse_double(v);
        else if (k == "horizon") horizon = static_cast<int>(parse_int(v));
        else if (k == "gamma") gamma = parse_double(v);
        else if (k == "init") init = parse_vector(v);
        else return false;
        return true;
    }
};

class Hvac final : public DomainModel {
public:
    explicit Hvac(HvacParams p = {}) : p_(std::move(p)) {
        const auto n = static_cast<Eigen::Index>(p_.rooms);
        if (p_.init.size() != n) throw std::invalid_argument("hvac6: init must have one entry per room");
        if (!(p_.sigma > 0.0)) throw std::invalid_argument("hvac6: sigma must be positive");
        set_boxes(Vec::Zero(n), Vec::Constant(n, p_.action_max), Vec::Constant(n, p_.state_lo),
                  Vec::Constant(n, p_.state_hi), Vec::Constant(n, p_.sample_lo), Vec::Constant(n, p_.sample_hi));
        set_episode(p_.horizon, p_.gamma, p_.init);
    }

    std::string name() const override { return "hvac6"; }
    const HvacParams& params() const { return p_; }

    Vec mean(const Vec& s, const Vec& a) const {
        const Eigen::Index n = s.size();
        Vec m(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            double adj = 0.0;
            if (j > 0) adj += s(j - 1) - s(j);
            if (j + 1 < n) adj += s(j + 1) - s(j);
            m(j) = s(j) + p_.kappa_air * a(j) * (p_.temp_air - s(j)) + p_.kappa_adj * adj +
                   p_.kappa_out * (p_.temp_out - s(j));
        }
        return m;
    }

    /// Distance from x to the comfort band.
    double discomfort(double x) const {
        if (x < p_.comfort_lo) return p_.comfort_lo - x;
        if (x > p_.comfort_hi) return x - p_.comfort_hi;
        return 0.0;
    }

    double reward(const Vec& s, const Vec& a) const override {
        double cost = 0.0;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            const double d = discomfort(s(j));
            cost += p_.air_cost * a(j) + p_.penalty * d * d;
        }
        return -cost;
    }
    Vec reward_grad_action(const Vec& s, const Vec&) const override { return Vec::Constant(s.size(), -p_.air_cost); }

    Vec sample_next(const Vec& s, const Vec& a, Rng& rng) const override {
        std::normal_distribution<double> N(0.0, p_.sigma);
        Vec m = mean(s, a);
        for (Eigen::Index j = 0; j < m.size(); ++j) m(j) += N(rng);
        return m;
    }

    double log_trans_density(const Vec& s, const Vec& a, const Vec& next) const override {
        const Vec m = mean(s, a);
        double lp = 0.0;
        for (Eigen::Index j = 0; j < m.size(); ++j) lp += detail::gauss_logpdf(next(j), m(j), p_.sigma);
        return lp;
    }

    Vec log_trans_grad_action(const Vec& s, const Vec& a, const Vec& next) const override {
        const Vec m = mean(s, a);
        const double s2 = p_.sigma * p_.sigma;
        Vec g(s.size());
        for (Eigen::Index j = 0; j < s.size(); ++j)
            g(j) = (next(j) - m(j)) / s2 * p_.kappa_air * (p_.temp_air - s(j));
        return g;
    }

    double coord_density(std::size_t j, const Vec& s, const Vec& a, double x) const override {
        return std::exp(detail::gauss_logpdf(x, mean(s, a)(static_cast<Eigen::Index>(j)), p_.sigma));
    }
    std::pair<double, double> coord_support(std::size_t j, const Vec& s, const Vec& a) const override {
        const double m = mean(s, a)(static_cast<Eigen::Index>(j));
        return {m - 12.0 * p_.sigma, m + 12.0 * p_.sigma};
    }

private:
    HvacParams p_;
};

// ---------------------------------------------------------------------------
// Reservoir: chain of reservoirs, action = released fraction, Gamma inflows.

struct ReservoirParams {
    std::size_t reservoirs = 20;
    double evaporation = 0.05;
    double inflow_shape = 2.0;
    double inflow_scale = 5.0;
    double level_lo = 200.0;
    double level_hi = 800.0;
    double penalty_lo = 1.0;
    double penalty_hi = 1.0;
    double reward_scale = 1e-3;
    double capacity = 1000.0;
    int horizon = 40;
    double gamma = 0.99;
    Vec init = Vec::Constant(20, 500.0);

    bool set(const std::string& k, const std::string& v) {
        if (k == "evaporation") evaporation = parse_double(v);
        else if (k == "inflow_shape") inflow_shape = parse_double(v);
        else if (k == "inflow_scale") inflow_scale = parse_double(v);
        else if (k == "level_lo") level_lo = parse_double(v);
        else if (k == "level_hi") level_hi = parse_double(v);
        else if (k == "penalty_lo") penalty_lo = parse_double(v);
        else if (k == "penalty_hi") penalty_hi = parse_double(v);
        else if (k == "reward_scale") reward_scale = parse_double(v);
        else if (k == "horizon") horizon = static_cast<int>(parse_int(v));
        else if (k == "gamma") gamma = parse_double(v);
        else if (k == "init") init = parse_vector(v);
        else return false;
        return true;
    }
};

class Reservoir final : public DomainModel {
public:
    explicit Reservoir(ReservoirParams p = {}) : p_(std::move(p)) {
        const auto n = static_cast<Eigen::Index>(p_.reservoirs);
        if (p_.init.size() != n) throw std::invalid_argument("res20: init must have one entry per reservoir");
        if (!(p_.inflow_shape > 1.0 && p_.inflow_scale > 0.0))
            throw std::invalid_argument("res20: inflow Gamma needs shape > 1 and scale > 0");
        set_boxes(Vec::Zero(n), Vec::Ones(n), Vec::Zero(n), Vec::Constant(n, p_.capacity), Vec::Zero(n),
                  Vec::Constant(n, p_.capacity));
        set_episode(p_.horizon, p_.gamma, p_.init);
    }

    std::string name() const override { return "res20"; }
    const ReservoirParams& params() const { return p_; }

    /// Deterministic part of the next level: keep, release, evaporate, receive upstream.
    Vec deterministic(const Vec& s, const Vec& a) const {
        const Eigen::Index n = s.size();
        Vec d(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i) = s(i) - a(i) * s(i) - p_.evaporation * s(i);
            if (i > 0) d(i) += a(i - 1) * s(i - 1);
        }
        return d;
    }

    double reward(const Vec& s, const Vec&) const override {
        double cost = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            const double lo = std::max(0.0, p_.level_lo - s(i));
            const double hi = std::max(0.0, s(i) - p_.level_hi);
            cost += p_.penalty_lo * lo * lo + p_.penalty_hi * hi * hi;
        }
        return -cost * p_.reward_scale;
    }
    Vec reward_grad_action(const Vec& s, const Vec&) const override { return Vec::Zero(s.size()); }

    Vec sample_next(const Vec& s, const Vec& a, Rng& rng) const override {
        std::gamma_distribution<double> G(p_.inflow_shape, p_.inflow_scale);
        Vec d = deterministic(s, a);
        for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += G(rng);
        return d;
    }

    double gamma_logpdf(double x) const {
        if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
        const double k = p_.inflow_shape, th = p_.inflow_scale;
        return (k - 1.0) * std::log(x) - x / th - std::lgamma(k) - k * std::log(th);
    }

    double log_trans_density(const Vec& s, const Vec& a, const Vec& next) const override {
        const Vec x = next - deterministic(s, a);
        double lp = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) lp += gamma_logpdf(x(i));
        return lp;
    }

    Vec log_trans_grad_action(const Vec& s, const Vec& a, const Vec& next) const override {
        const Vec x = next - deterministic(s, a);
        if (!(x.array() > 0.0).all()) throw OutOfSupport("res20: non-positive inflow residual");
        const double k = p_.inflow_shape, th = p_.inflow_scale;
        const Eigen::Index n = s.size();
        Vec score = (k - 1.0) / x.array() - 1.0 / th;  // d ln p_i / d x_i
        Vec g(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            g(i) = score(i) * s(i);
            if (i + 1 < n) g(i) -= score(i + 1) * s(i);
        }
        return g;
    }

    double coord_density(std::size_t j, const Vec& s, const Vec& a, double x) const override {
        const double r = x - deterministic(s, a)(static_cast<Eigen::Index>(j));
        return r > 0.0 ? std::exp(gamma_logpdf(r)) : 0.0;
    }
    std::pair<double, double> coord_support(std::size_t j, const Vec& s, const Vec& a) const override {
        const double d = deterministic(s, a)(static_cast<Eigen::Index>(j));
        return {d, d + 60.0 * p_.inflow_shape * p_.inflow_scale};
    }

private:
    ReservoirParams p_;
};

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& domain_names() {
    static const std::vector<std::string> names{"nav2", "hvac6", "res20"};
    return names;
}

/// Build a domain by name; overrides use "<name>.<key>" keys (e.g. "nav2.sigma").
inline DomainPtr make_domain(const std::string& name, const std::map<std::string, std::string>& overrides = {}) {
    if (name == "nav2") {
        NavigationParams p;
        detail::apply_overrides(p, overrides, name);
        return std::make_shared<Navigation>(p);
    }
    if (name == "hvac6") {
        HvacParams p;
        detail::apply_overrides(p, overrides, name);
        return std::make_shared<Hvac>(p);
    }
    if (name == "res20") {
        ReservoirParams p;
        detail::apply_overrides(p, overrides, name);
        return std::make_shared<Reservoir>(p);
    }
    throw std::invalid_argument("unknown domain '" + name + "' (expected nav2, hvac6 or res20)");
}

// ---------------------------------------------------------------------------
// Episode primitives

/// Start state: init_state if given (bounds-checked), a uniform draw from the
/// sampling box when `sample` is set, else the domain default.
inline Vec reset(const DomainModel& m, Rng& rng, const std::optional<Vec>& init_state = std::nullopt,
                 bool sample = false) {
    if (init_state) {
        if (!m.in_state_box(*init_state)) throw std::out_of_range(m.name() + ": start state outside the state box");
        return *init_state;
    }
    if (sample) {
        Vec s(static_cast<Eigen::Index>(m.state_dim()));
        for (Eigen::Index i = 0; i < s.size(); ++i)
            s(i) = std::uniform_real_distribution<double>(m.sample_lo()(i), m.sample_hi()(i))(rng);
        return s;
    }
    return m.default_init_state();
}

inline StepResult step(const DomainModel& m, const Vec& state, const Vec& action, Rng& rng) {
    detail::require_finite(state, "state");
    detail::require_finite(action, "action");
    if (state.size() != static_cast<Eigen::Index>(m.state_dim()) ||
        action.size() != static_cast<Eigen::Index>(m.action_dim()))
        throw std::invalid_argument(m.name() + ": state/action dimension mismatch");
    const Vec a = m.clamp_action(action);
    StepResult r;
    r.reward = m.reward(state, a);
    r.next_state = m.clamp_state(m.sample_next(state, a, rng));
    return r;
}

using PolicyFn = std::function<Vec(const Vec&)>;
using NoiseFn = std::function<Vec(Rng&)>;

/// Horizon-length rollout; optional noise is added to the policy action before clamping.
inline Trajectory rollout(const DomainModel& m, const PolicyFn& policy, Rng& rng, const Vec& init_state,
                          const NoiseFn& noise = {}) {
    Trajectory tr;
    tr.start = init_state;
    Vec s = init_state;
    tr.steps.reserve(static_cast<std::size_t>(m.horizon()));
    for (int t = 0; t < m.horizon(); ++t) {
        Vec a = policy(s);
        if (noise) a += noise(rng);
        a = m.clamp_action(a);
        auto r = step(m, s, a, rng);
        tr.steps.push_back({s, a, r.reward, r.next_state, false});
        s = std::move(r.next_state);
    }
    return tr;
}

}  // namespace ilbo

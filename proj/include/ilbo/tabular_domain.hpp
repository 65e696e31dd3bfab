#pragma once

// A TabularMdp seen through the DomainModel interface: states are one-hot
// vectors, next states are drawn from trans(s, a) and returned one-hot. With a
// linear policy on the one-hot input (no hidden layers) the agent's sampled
// gradient estimates the tabular gradient directly.

#include "ilbo/domains.hpp"
#include "ilbo/tabular.hpp"

namespace ilbo {

class OneHotTabularDomain final : public DomainModel {
public:
    explicit OneHotTabularDomain(TabularMdp mdp, int horizon = 40) : mdp_(std::move(mdp)) {
        mdp_.validate();
        const auto n = static_cast<Eigen::Index>(mdp_.n_states);
        set_boxes(mdp_.action_lo, mdp_.action_hi, Vec::Zero(n), Vec::Ones(n), Vec::Zero(n), Vec::Ones(n));
        Eigen::Index start = 0;
        mdp_.b0.maxCoeff(&start);
        set_episode(horizon, mdp_.gamma, one_hot(static_cast<std::size_t>(start)));
    }

    std::string name() const override { return "tabular"; }
    const TabularMdp& mdp() const { return mdp_; }

    Vec one_hot(std::size_t s) const {
        Vec v = Vec::Zero(static_cast<Eigen::Index>(mdp_.n_states));
        v(static_cast<Eigen::Index>(s)) = 1.0;
        return v;
    }

    /// Index of a one-hot state; throws std::invalid_argument otherwise.
    std::size_t index_of(const Vec& x) const {
        if (x.size() != static_cast<Eigen::Index>(mdp_.n_states))
            throw std::invalid_argument("tabular: state dimension mismatch");
        Eigen::Index k = 0;
        const double top = x.maxCoeff(&k);
        if (top != 1.0 || x.sum() != 1.0 || (x.array() != 0.0 && x.array() != 1.0).any())
            throw std::invalid_argument("tabular: state is not one-hot");
        return static_cast<std::size_t>(k);
    }

    double reward(const Vec& s, const Vec& a) const override { return mdp_.rew(index_of(s), a); }
    Vec reward_grad_action(const Vec& s, const Vec& a) const override { return mdp_.rew_grad(index_of(s), a); }

    Vec sample_next(const Vec& s, const Vec& a, Rng& rng) const override {
        const Vec p = mdp_.trans(index_of(s), a);
        std::discrete_distribution<std::size_t> D(p.data(), p.data() + p.size());
        return one_hot(D(rng));
    }

    double log_trans_density(const Vec& s, const Vec& a, const Vec& next) const override {
        const double p = mdp_.trans(index_of(s), a)(static_cast<Eigen::Index>(index_of(next)));
        return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    }

    Vec log_trans_grad_action(const Vec& s, const Vec& a, const Vec& next) const override {
        const std::size_t i = index_of(s);
        const auto j = static_cast<Eigen::Index>(index_of(next));
        const double p = mdp_.trans(i, a)(j);
        if (!(p > 0.0)) throw OutOfSupport("tabular: zero-probability transition");
        return mdp_.trans_jac(i, a).row(j).transpose() / p;
    }

    /// Coordinate j of the next state is Bernoulli(T(s, a, j)); there is no density.
    double coord_density(std::size_t, const Vec&, const Vec&, double) const override {
        throw std::logic_error("tabular: next-state coordinates are discrete");
    }
    std::pair<double, double> coord_support(std::size_t, const Vec&, const Vec&) const override { return {0.0, 1.0}; }

private:
    TabularMdp mdp_;
};

}  // namespace ilbo

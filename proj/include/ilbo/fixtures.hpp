#pragma once

// Seeded verification fixtures: 5-state MDPs with softmax-affine transitions
// and sigmoid rewards, and a smooth 1-d continuous-state MDP on [0, 1].

#include "ilbo/tabular.hpp"


namespace ilbo {

struct SoftmaxFixtureParams {
    Mat base;   // logits offset A[s, s']
    Mat slope;  // logits slope B[s, s'] (scalar action)
    Vec rew_slope;
    Vec rew_offset;
};

/// T(s, a, .) = softmax(A[s, .] + B[s, .] a), r(s, a) = 1 + sigmoid(w_s a + c_s).
inline TabularMdp softmax_mdp(const SoftmaxFixtureParams& p, Vec b0, double gamma) {
    TabularMdp m;
    m.n_states = static_cast<std::size_t>(p.base.rows());
    m.b0 = std::move(b0);
    m.gamma = gamma;
    m.action_dim = 1;
    m.action_lo = Vec::Constant(1, -1.0);
    m.action_hi = Vec::Constant(1, 1.0);
    auto probs = [p](std::size_t s, double a) {
        Vec z = p.base.row(static_cast<Eigen::Index>(s)).transpose() + a * p.slope.row(static_cast<Eigen::Index>(s)).transpose();
        z.array() -= z.maxCoeff();
        Vec e = z.array().exp();
        return Vec(e / e.sum());
    };
    m.trans = [probs](std::size_t s, const Vec& a) { return probs(s, a(0)); };
    m.trans_jac = [probs, p](std::size_t s, const Vec& a) {
        const Vec q = probs(s, a(0));
        const Vec B = p.slope.row(static_cast<Eigen::Index>(s)).transpose();
        Mat jac(q.size(), 1);
        jac.col(0) = q.cwiseProduct((B.array() - q.dot(B)).matrix());
        return jac;
    };
    m.rew = [p](std::size_t s, const Vec& a) {
        const auto i = static_cast<Eigen::Index>(s);
        return 1.0 + 1.0 / (1.0 + std::exp(-(p.rew_slope(i) * a(0) + p.rew_offset(i))));
    };
    m.rew_grad = [p](std::size_t s, const Vec& a) {
        const auto i = static_cast<Eigen::Index>(s);
        const double sg = 1.0 / (1.0 + std::exp(-(p.rew_slope(i) * a(0) + p.rew_offset(i))));
        return Vec::Constant(1, p.rew_slope(i) * sg * (1.0 - sg));
    };
    m.validate();
    return m;
}

/// The shipped 5-state fixture for a given seed (1, 2, 3 are the standard set).
inline TabularMdp fixture_mdp(std::uint64_t seed, std::size_t n = 5, double gamma = 0.5) {
    Rng rng = make_rng(seed, 0xf1);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const auto N = static_cast<Eigen::Index>(n);
    SoftmaxFixtureParams p{Mat(N, N), Mat(N, N), Vec(N), Vec(N)};
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j) {
            p.base(i, j) = U(rng);
            p.slope(i, j) = 2.0 * U(rng);
        }
    for (Eigen::Index i = 0; i < N; ++i) {
        p.rew_slope(i) = 2.0 * U(rng);
        p.rew_offset(i) = U(rng);
    }
    Vec b0(N);
    for (Eigen::Index i = 0; i < N; ++i) b0(i) = 0.2 + 0.8 * (0.5 * (U(rng) + 1.0));
    b0 /= b0.sum();
    return softmax_mdp(p, b0, gamma);
}

inline TabularPolicy random_policy(const TabularMdp& mdp, Rng& rng) {
    TabularPolicy mu(static_cast<Eigen::Index>(mdp.n_states), static_cast<Eigen::Index>(mdp.action_dim));
    for (Eigen::Index s = 0; s < mu.rows(); ++s)
        for (Eigen::Index k = 0; k < mu.cols(); ++k)
            mu(s, k) = std::uniform_real_distribution<double>(mdp.action_lo(k), mdp.action_hi(k))(rng);
    return mu;
}

/// Smooth 1-d continuous MDP on [0, 1]: truncated-Gaussian transitions around
/// m(s, a) = 0.5 + 0.3 (s - 0.5) + drift a, reward 1.5 + 0.5 sin(3 s) - 0.2 a^2,
/// uniform b0. action_dependent = false sets drift = 0 and drops the a^2 term.
inline ContinuousMdp1d continuous_fixture(bool action_dependent = true) {
    const double width = 0.2;
    const double drift = action_dependent ? 0.25 : 0.0;
    const double act_cost = action_dependent ? 0.2 : 0.0;
    auto pdf = [](double z) { return 0.3989422804014327 * std::exp(-0.5 * z * z); };
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    auto mean = [drift](double s, double a) { return 0.5 + 0.3 * (s - 0.5) + drift * a; };
    ContinuousMdp1d c;
    c.lo = 0.0;
    c.hi = 1.0;
    c.gamma = 0.9;
    c.density = [=](double s, double a, double x) {
        const double m = mean(s, a);
        const double Z = cdf((1.0 - m) / width) - cdf(-m / width);
        return pdf((x - m) / width) / (width * Z);
    };
    c.density_grad = [=](double s, double a, double x) {
        const double m = mean(s, a);
        const double z0 = -m / width, z1 = (1.0 - m) / width, z = (x - m) / width;
        const double Z = cdf(z1) - cdf(z0);
        const double t = pdf(z) / (width * Z);
        const double dt_dm = t * (z / width + (pdf(z1) - pdf(z0)) / (width * Z));
        return drift * dt_dm;
    };
    c.reward = [act_cost](double s, double a) { return 1.5 + 0.5 * std::sin(3.0 * s) - act_cost * a * a; };
    c.reward_grad = [act_cost](double, double a) { return -2.0 * act_cost * a; };
    c.b0 = [](double) { return 1.0; };
    return c;
}

/// Policy used with the continuous fixture.
inline double continuous_fixture_policy(double s) { return 0.5 * std::sin(2.0 * 3.14159265358979323846 * s); }

}  // namespace ilbo

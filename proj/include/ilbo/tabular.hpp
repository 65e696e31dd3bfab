#pragma once

// Exact minorize-maximize machinery on small discrete-state MDPs whose
// transitions and rewards depend smoothly on a continuous per-state action.
//
// With w(s) = ln r(s, mu(s)) and f(s, s') = ln T(s, mu(s), s'), the objective
// J = b0' (I - gamma E)^-1 e^w with E = e^f is convex in (w, f); its tangent
// plane at the reference policy is the lower bound maximized each MM round.

#include "ilbo/types.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace ilbo {

struct TabularMdp {
    std::size_t n_states = 0;
    Vec b0;
    double gamma = 0.9;
    std::size_t action_dim = 1;
    Vec action_lo;
    Vec action_hi;
    /// Next-state distribution for (s, a).
    std::function<Vec(std::size_t, const Vec&)> trans;
    /// n_states x action_dim Jacobian of trans(s, a).
    std::function<Mat(std::size_t, const Vec&)> trans_jac;
    /// Strictly positive reward.
    std::function<double(std::size_t, const Vec&)> rew;
    std::function<Vec(std::size_t, const Vec&)> rew_grad;

    void validate() const {
        if (n_states == 0 || action_dim == 0) throw std::invalid_argument("TabularMdp: empty state or action space");
        if (b0.size() != static_cast<Eigen::Index>(n_states)) throw std::invalid_argument("TabularMdp: b0 size");
        if ((b0.array() < 0.0).any() || std::abs(b0.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("TabularMdp: b0 is not a probability vector");
        if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma outside (0, 1)");
        if (action_lo.size() != static_cast<Eigen::Index>(action_dim) ||
            action_hi.size() != static_cast<Eigen::Index>(action_dim) || !(action_lo.array() < action_hi.array()).all())
            throw std::invalid_argument("TabularMdp: bad action box");
        if (!trans || !trans_jac || !rew || !rew_grad) throw std::invalid_argument("TabularMdp: missing model function");
    }
};

/// Row s holds the action mu(s).
using TabularPolicy = Mat;

inline void check_policy(const TabularMdp& mdp, const TabularPolicy& mu) {
    if (mu.rows() != static_cast<Eigen::Index>(mdp.n_states) || mu.cols() != static_cast<Eigen::Index>(mdp.action_dim))
        throw std::invalid_argument("TabularPolicy: shape does not match the MDP");
    if (!mu.allFinite()) throw std::invalid_argument("TabularPolicy: non-finite action");
}

inline TabularPolicy project_policy(const TabularMdp& mdp, TabularPolicy mu) {
    for (Eigen::Index s = 0; s < mu.rows(); ++s)
        mu.row(s) = mu.row(s).cwiseMax(mdp.action_lo.transpose()).cwiseMin(mdp.action_hi.transpose());
    return mu;
}

inline Vec action_of(const TabularPolicy& mu, std::size_t s) { return mu.row(static_cast<Eigen::Index>(s)).transpose(); }

/// P[s, s'] = T(s, mu(s), s').
inline Mat transition_matrix(const TabularMdp& mdp, const TabularPolicy& mu) {
    check_policy(mdp, mu);
    const auto n = static_cast<Eigen::Index>(mdp.n_states);
    Mat P(n, n);
    for (std::size_t s = 0; s < mdp.n_states; ++s) P.row(static_cast<Eigen::Index>(s)) = mdp.trans(s, action_of(mu, s)).transpose();
    return P;
}

inline Vec reward_vector(const TabularMdp& mdp, const TabularPolicy& mu) {
    check_policy(mdp, mu);
    Vec r(static_cast<Eigen::Index>(mdp.n_states));
    for (std::size_t s = 0; s < mdp.n_states; ++s) r(static_cast<Eigen::Index>(s)) = mdp.rew(s, action_of(mu, s));
    return r;
}

namespace detail {

inline Vec solve_resolvent(const Mat& A, const Vec& rhs) {
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible()) throw std::runtime_error("tabular: singular (I - gamma P) system");
    return lu.solve(rhs);
}

}  // namespace detail

/// Generalized objective b0' (I - gamma E)^-1 w for a non-negative kernel E
/// (not necessarily stochastic) and reward vector w.
inline double objective_from_kernel(const Vec& b0, double gamma, const Mat& E, const Vec& w) {
    const Mat A = Mat::Identity(E.rows(), E.cols()) - gamma * E;
    return b0.dot(detail::solve_resolvent(A, w));
}

/// V solving (I - gamma P) V = r.
inline Vec policy_eval(const TabularMdp& mdp, const TabularPolicy& mu) {
    const Mat P = transition_matrix(mdp, mu);
    return detail::solve_resolvent(Mat::Identity(P.rows(), P.cols()) - mdp.gamma * P, reward_vector(mdp, mu));
}

/// d solving d = b0 + gamma P' d.
inline Vec occupancy(const TabularMdp& mdp, const TabularPolicy& mu) {
    const Mat P = transition_matrix(mdp, mu);
    return detail::solve_resolvent(Mat::Identity(P.rows(), P.cols()) - mdp.gamma * P.transpose(), mdp.b0);
}

inline double objective_j(const TabularMdp& mdp, const TabularPolicy& mu) { return mdp.b0.dot(policy_eval(mdp, mu)); }

/// dJ/dw(s) = d(s) r(s, mu(s)).
inline Vec grad_omega(const TabularMdp& mdp, const TabularPolicy& mu) {
    return occupancy(mdp, mu).cwiseProduct(reward_vector(mdp, mu));
}

/// dJ/df(s, s') = gamma d(s) T(s, mu(s), s') V(s').
inline Mat grad_phi(const TabularMdp& mdp, const TabularPolicy& mu) {
    const Mat P = transition_matrix(mdp, mu);
    const Vec d = occupancy(mdp, mu);
    const Vec V = policy_eval(mdp, mu);
    return mdp.gamma * (d.asDiagonal() * P * V.asDiagonal());
}

/// Quantities of the reference policy that the lower bound is built from.
struct MinorizerBasis {
    double j_ref = 0.0;
    Vec g_omega;  // d^m(s) r(s, mu^m(s))
    Mat g_phi;    // gamma d^m(s) T(s, mu^m(s), s') V^m(s')
    Vec log_r_ref;
    Mat log_t_ref;
};

inline MinorizerBasis minorizer_basis(const TabularMdp& mdp, const TabularPolicy& ref) {
    MinorizerBasis b;
    const Mat P = transition_matrix(mdp, ref);
    const Vec r = reward_vector(mdp, ref);
    b.j_ref = objective_j(mdp, ref);
    b.g_omega = grad_omega(mdp, ref);
    b.g_phi = grad_phi(mdp, ref);
    b.log_r_ref = r.array().log();
    b.log_t_ref = P.array().log();
    return b;
}

/// Full minorizer J^m + <dJ/dw, w(mu) - w^m> + <dJ/df, f(mu) - f^m>, constants
/// included so it touches J at mu = ref. Returns -inf when mu assigns zero
/// probability to a transition that carries positive weight.
inline double lower_bound(const TabularMdp& mdp, const MinorizerBasis& b, const TabularPolicy& mu) {
    check_policy(mdp, mu);
    double lb = b.j_ref;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const Vec a = action_of(mu, s);
        const double r = mdp.rew(s, a);
        if (!(r > 0.0)) throw std::domain_error("lower_bound: reward must be strictly positive");
        lb += b.g_omega(si) * (std::log(r) - b.log_r_ref(si));
        const Vec p = mdp.trans(s, a);
        for (Eigen::Index t = 0; t < p.size(); ++t) {
            const double w = b.g_phi(si, t);
            if (w == 0.0) continue;
            if (!(p(t) > 0.0)) return -std::numeric_limits<double>::infinity();
            lb += w * (std::log(p(t)) - b.log_t_ref(si, t));
        }
    }
    return lb;
}

inline double lower_bound(const TabularMdp& mdp, const TabularPolicy& mu, const TabularPolicy& ref) {
    return lower_bound(mdp, minorizer_basis(mdp, ref), mu);
}

/// Per-state action gradient of the lower bound at an arbitrary mu:
/// g_omega(s) grad ln r + sum_s' g_phi(s, s') grad ln T.
inline Mat lower_bound_grad(const TabularMdp& mdp, const MinorizerBasis& b, const TabularPolicy& mu) {
    check_policy(mdp, mu);
    Mat g(mu.rows(), mu.cols());
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const Vec a = action_of(mu, s);
        Vec gs = b.g_omega(si) * mdp.rew_grad(s, a) / mdp.rew(s, a);
        const Vec p = mdp.trans(s, a);
        const Mat jac = mdp.trans_jac(s, a);
        for (Eigen::Index t = 0; t < p.size(); ++t)
            if (b.g_phi(si, t) != 0.0) gs += b.g_phi(si, t) / p(t) * jac.row(t).transpose();
        g.row(si) = gs.transpose();
    }
    return g;
}

namespace detail {

inline Mat drp_grad_impl(const TabularMdp& mdp, const TabularPolicy& mu, bool baseline) {
    const Vec d = occupancy(mdp, mu);
    const Vec V = policy_eval(mdp, mu);
    Mat g(mu.rows(), mu.cols());
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const auto si = static_cast<Eigen::Index>(s);
        const Vec a = action_of(mu, s);
        const Vec value = baseline ? Vec(V.array() - V(si)) : V;
        const Vec gs = mdp.rew_grad(s, a) + mdp.gamma * mdp.trans_jac(s, a).transpose() * value;
        g.row(si) = d(si) * gs.transpose();
    }
    return g;
}

}  // namespace detail

/// d(s) [grad_a r + gamma sum_s' grad_a T(s, a, s') V(s')] at a = mu(s).
inline Mat drp_grad(const TabularMdp& mdp, const TabularPolicy& mu) { return detail::drp_grad_impl(mdp, mu, false); }

/// As drp_grad with V(s') replaced by V(s') - V(s).
inline Mat drp_grad_baseline(const TabularMdp& mdp, const TabularPolicy& mu) {
    return detail::drp_grad_impl(mdp, mu, true);
}

// ---------------------------------------------------------------------------
// MM iteration

struct MmOptions {
    int outer_iters = 20;
    int inner_steps = 200;
    double inner_lr = 0.05;
};

struct MmIterate {
    TabularPolicy policy;
    double j = 0.0;            // J(mu^{m+1})
    double bound_gain = 0.0;   // lower_bound(mu^{m+1}; mu^m) - J(mu^m)
    bool accepted = false;
};

/// Each round maximizes lower_bound(.; mu^m) by projected gradient ascent on the
/// per-state actions and accepts the result only if the bound rose above its
/// touch value J(mu^m). The ascent step starts at inner_lr and adapts: halved
/// until the bound does not decrease, grown by 1.5x after each success. Entry 0
/// of the result is policy0 itself.
inline std::vector<MmIterate> mm_iterate(const TabularMdp& mdp, const TabularPolicy& policy0, const MmOptions& opt = {}) {
    check_policy(mdp, policy0);
    std::vector<MmIterate> out;
    TabularPolicy mu = project_policy(mdp, policy0);
    out.push_back({mu, objective_j(mdp, mu), 0.0, true});
    for (int m = 0; m < opt.outer_iters; ++m) {
        const MinorizerBasis basis = minorizer_basis(mdp, mu);
        const double touch = basis.j_ref;
        TabularPolicy x = mu;
        double lb_x = lower_bound(mdp, basis, x);
        double step = opt.inner_lr;
        for (int k = 0; k < opt.inner_steps; ++k) {
            const Mat g = lower_bound_grad(mdp, basis, x);
            bool moved = false;
            for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
                TabularPolicy cand = project_policy(mdp, x + step * g);
                const double lb = lower_bound(mdp, basis, cand);
                if (lb >= lb_x) {
                    moved = (cand - x).cwiseAbs().maxCoeff() > 0.0;
                    x = std::move(cand);
                    lb_x = lb;
                    break;
                }
            }
            if (!moved) break;
            step *= 1.5;
        }
        MmIterate it;
        it.accepted = lb_x > touch;
        if (it.accepted) mu = x;
        it.policy = mu;
        it.j = objective_j(mdp, mu);
        it.bound_gain = lb_x - touch;
        out.push_back(std::move(it));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Riemann discretization of a 1-d continuous-state MDP

struct ContinuousMdp1d {
    double lo = 0.0;
    double hi = 1.0;
    double gamma = 0.9;
    double action_lo = -1.0;
    double action_hi = 1.0;
    /// T(s, a, s'), a density in s' over [lo, hi].
    std::function<double(double, double, double)> density;
    /// d T(s, a, s') / da
    std::function<double(double, double, double)> density_grad;
    std::function<double(double, double)> reward;
    std::function<double(double, double)> reward_grad;
    std::function<double(double)> b0;
};

struct RiemannGrid {
    double a = 0.0;
    double b = 1.0;
    std::size_t n = 2;
    Vec points;  // midpoints
    double width = 0.5;

    RiemannGrid() = default;
    RiemannGrid(double lo, double hi, std::size_t parts) : a(lo), b(hi), n(parts) {
        if (!(lo < hi)) throw std::invalid_argument("RiemannGrid: need a < b");
        if (parts < 2) throw std::invalid_argument("RiemannGrid: need at least 2 partitions");
        width = (hi - lo) / static_cast<double>(parts);
        points.resize(static_cast<Eigen::Index>(parts));
        for (std::size_t i = 0; i < parts; ++i) points(static_cast<Eigen::Index>(i)) = lo + (static_cast<double>(i) + 0.5) * width;
    }
};

struct Discretization {
    TabularMdp mdp;
    RiemannGrid grid;
    double b0_mass_error = 0.0;
    /// max over rows and probe actions of |1 - sum_j T(x_i, a, x_j) width|.
    double max_row_mass_error = 0.0;
    /// Mass escaping [a, b] beyond kMassWarning.
    std::vector<std::string> warnings;

    static constexpr double kMassWarning = 1e-3;
    static constexpr int kProbeActions = 21;

    /// Tabular policy from a continuous one, evaluated at the grid points.
    TabularPolicy policy(const std::function<double(double)>& mu) const {
        TabularPolicy p(grid.points.size(), 1);
        for (Eigen::Index i = 0; i < grid.points.size(); ++i) p(i, 0) = mu(grid.points(i));
        return p;
    }
};

/// Midpoint-rule reduction: T~(x_i, a, x_j) = T(x_i, a, x_j) width, b0~(x_i) =
/// b0(x_i) width, each row renormalized onto the simplex.
inline Discretization riemann_discretize(const ContinuousMdp1d& c, std::size_t n) {
    Discretization out;
    out.grid = RiemannGrid(c.lo, c.hi, n);
    const RiemannGrid g = out.grid;
    Vec b0(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) b0(static_cast<Eigen::Index>(i)) = c.b0(g.points(static_cast<Eigen::Index>(i))) * g.width;
    out.b0_mass_error = std::abs(1.0 - b0.sum());
    if (out.b0_mass_error > Discretization::kMassWarning)
        out.warnings.push_back("b0 mass error " + format_double(out.b0_mass_error));
    b0 /= b0.sum();

    auto raw_row = [c, g](std::size_t s, double a, bool grad) {
        Vec q(g.points.size());
        const double x = g.points(static_cast<Eigen::Index>(s));
        for (Eigen::Index j = 0; j < q.size(); ++j)
            q(j) = (grad ? c.density_grad(x, a, g.points(j)) : c.density(x, a, g.points(j))) * g.width;
        return q;
    };
    for (std::size_t s = 0; s < n; ++s) {
        double worst = 0.0;
        for (int k = 0; k < Discretization::kProbeActions; ++k) {
            const double a = c.action_lo + (c.action_hi - c.action_lo) * k / (Discretization::kProbeActions - 1);
            worst = std::max(worst, std::abs(1.0 - raw_row(s, a, false).sum()));
        }
        out.max_row_mass_error = std::max(out.max_row_mass_error, worst);
        if (worst > Discretization::kMassWarning)
            out.warnings.push_back("row " + std::to_string(s) + " mass error " + format_double(worst));
    }

    TabularMdp& m = out.mdp;
    m.n_states = n;
    m.b0 = b0;
    m.gamma = c.gamma;
    m.action_dim = 1;
    m.action_lo = Vec::Constant(1, c.action_lo);
    m.action_hi = Vec::Constant(1, c.action_hi);
    m.trans = [raw_row](std::size_t s, const Vec& a) {
        const Vec q = raw_row(s, a(0), false);
        return Vec(q / q.sum());
    };
    m.trans_jac = [raw_row](std::size_t s, const Vec& a) {
        const Vec q = raw_row(s, a(0), false);
        const Vec dq = raw_row(s, a(0), true);
        const double mass = q.sum();
        const Vec p = q / mass;
        Mat jac(q.size(), 1);
        jac.col(0) = (dq - p * dq.sum()) / mass;
        return jac;
    };
    m.rew = [c, g](std::size_t s, const Vec& a) { return c.reward(g.points(static_cast<Eigen::Index>(s)), a(0)); };
    m.rew_grad = [c, g](std::size_t s, const Vec& a) {
        return Vec::Constant(1, c.reward_grad(g.points(static_cast<Eigen::Index>(s)), a(0)));
    };
    m.validate();
    return out;
}

}  // namespace ilbo

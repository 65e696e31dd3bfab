#pragma once

// Property suites behind the `verify` and `gradcheck` verbs. Each suite returns
// one row per checked property; a row passes when measured <= tolerance.

#include "ilbo/agent.hpp"
#include "ilbo/fixtures.hpp"
#include "ilbo/tabular_domain.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <ostream>

namespace ilbo {

struct CheckRow {
    std::string suite;
    std::string property;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline CheckRow check_le(std::string suite, std::string property, double measured, double tolerance) {
    return {std::move(suite), std::move(property), measured, tolerance, std::isfinite(measured) && measured <= tolerance};
}

inline bool all_pass(const std::vector<CheckRow>& rows) {
    for (const auto& r : rows)
        if (!r.pass) return false;
    return true;
}

inline void write_check_csv(std::ostream& os, const std::vector<CheckRow>& rows, bool header = true) {
    if (header) os << "suite,property,measured,tolerance,pass\n";
    for (const auto& r : rows)
        os << r.suite << ',' << r.property << ',' << format_double(r.measured) << ',' << format_double(r.tolerance) << ','
           << (r.pass ? "pass" : "FAIL") << '\n';
}

inline constexpr std::uint64_t kFixtureSeeds[] = {1, 2, 3};

// ---------------------------------------------------------------------------
// Oracles

namespace oracle {

inline constexpr double kFdStep = 1e-6;

/// Central differences of J in w = ln r, perturbing one state's reward at a time.
inline Vec fd_grad_omega(const TabularMdp& mdp, const TabularPolicy& mu) {
    const Mat P = transition_matrix(mdp, mu);
    const Vec r = reward_vector(mdp, mu);
    Vec g(r.size());
    for (Eigen::Index s = 0; s < r.size(); ++s) {
        Vec rp = r, rm = r;
        rp(s) *= std::exp(kFdStep);
        rm(s) *= std::exp(-kFdStep);
        g(s) = (objective_from_kernel(mdp.b0, mdp.gamma, P, rp) - objective_from_kernel(mdp.b0, mdp.gamma, P, rm)) /
               (2.0 * kFdStep);
    }
    return g;
}

/// Central differences of J in f = ln T entrywise, rows not renormalized.
inline Mat fd_grad_phi(const TabularMdp& mdp, const TabularPolicy& mu) {
    const Mat P = transition_matrix(mdp, mu);
    const Vec r = reward_vector(mdp, mu);
    Mat g(P.rows(), P.cols());
    for (Eigen::Index s = 0; s < P.rows(); ++s)
        for (Eigen::Index t = 0; t < P.cols(); ++t) {
            Mat Ep = P, Em = P;
            Ep(s, t) *= std::exp(kFdStep);
            Em(s, t) *= std::exp(-kFdStep);
            g(s, t) = (objective_from_kernel(mdp.b0, mdp.gamma, Ep, r) - objective_from_kernel(mdp.b0, mdp.gamma, Em, r)) /
                      (2.0 * kFdStep);
        }
    return g;
}

/// Central differences of any scalar function of the policy, per (s, k).
inline Mat fd_policy_grad(const std::function<double(const TabularPolicy&)>& f, const TabularPolicy& mu) {
    Mat g(mu.rows(), mu.cols());
    for (Eigen::Index s = 0; s < mu.rows(); ++s)
        for (Eigen::Index k = 0; k < mu.cols(); ++k) {
            TabularPolicy p = mu, m = mu;
            p(s, k) += kFdStep;
            m(s, k) -= kFdStep;
            g(s, k) = (f(p) - f(m)) / (2.0 * kFdStep);
        }
    return g;
}

struct GridOptimum {
    double j = 0.0;
    TabularPolicy policy;
};

/// Value iteration restricted to an evenly spaced action grid (scalar actions).
inline GridOptimum grid_optimum(const TabularMdp& mdp, std::size_t n_grid = 2001, double tol = 1e-13) {
    if (mdp.action_dim != 1) throw std::invalid_argument("grid_optimum: scalar actions only");
    const auto n = mdp.n_states;
    const double lo = mdp.action_lo(0), hi = mdp.action_hi(0);
    std::vector<Vec> P(n * n_grid);
    std::vector<double> R(n * n_grid), acts(n_grid);
    for (std::size_t k = 0; k < n_grid; ++k) acts[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_grid - 1);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < n_grid; ++k) {
            const Vec a = Vec::Constant(1, acts[k]);
            P[s * n_grid + k] = mdp.trans(s, a);
            R[s * n_grid + k] = mdp.rew(s, a);
        }
    Vec V = Vec::Zero(static_cast<Eigen::Index>(n));
    TabularPolicy mu = TabularPolicy::Zero(static_cast<Eigen::Index>(n), 1);
    for (int it = 0; it < 100000; ++it) {
        Vec Vn(V.size());
        for (std::size_t s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n_grid; ++k) {
                const double q = R[s * n_grid + k] + mdp.gamma * P[s * n_grid + k].dot(V);
                if (q > best) {
                    best = q;
                    mu(static_cast<Eigen::Index>(s), 0) = acts[k];
                }
            }
            Vn(static_cast<Eigen::Index>(s)) = best;
        }
        const double delta = (Vn - V).cwiseAbs().maxCoeff();
        V = std::move(Vn);
        if (delta < tol) break;
    }
    return {objective_j(mdp, mu), mu};
}

/// J of a continuous 1-d MDP with action-independent dynamics by Nystrom
/// discretization of V = r + gamma K V on Gauss-Legendre nodes.
inline double nystrom_objective(const ContinuousMdp1d& c, const std::function<double(double)>& mu) {
    using GL = boost::math::quadrature::gauss<double, 100>;
    const auto& abs = GL::abscissa();
    const auto& wts = GL::weights();
    std::vector<double> x, w;
    const double half = 0.5 * (c.hi - c.lo), mid = 0.5 * (c.hi + c.lo);
    for (std::size_t i = 0; i < abs.size(); ++i) {
        x.push_back(mid + half * abs[i]);
        w.push_back(half * wts[i]);
        if (abs[i] != 0.0) {
            x.push_back(mid - half * abs[i]);
            w.push_back(half * wts[i]);
        }
    }
    const auto N = static_cast<Eigen::Index>(x.size());
    Mat A = Mat::Identity(N, N);
    Vec r(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double a = mu(x[static_cast<std::size_t>(i)]);
        r(i) = c.reward(x[static_cast<std::size_t>(i)], a);
        for (Eigen::Index j = 0; j < N; ++j)
            A(i, j) -= c.gamma * w[static_cast<std::size_t>(j)] *
                       c.density(x[static_cast<std::size_t>(i)], a, x[static_cast<std::size_t>(j)]);
    }
    const Vec V = A.fullPivLu().solve(r);
    double j = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) j += w[static_cast<std::size_t>(i)] * c.b0(x[static_cast<std::size_t>(i)]) * V(i);
    return j;
}

}  // namespace oracle

inline double max_rel_error(const Mat& analytic, const Mat& reference, double floor = 1e-8) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i)
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            const double den = std::max({std::abs(analytic(i, j)), std::abs(reference(i, j)), floor});
            worst = std::max(worst, std::abs(analytic(i, j) - reference(i, j)) / den);
        }
    return worst;
}

// ---------------------------------------------------------------------------
// Tabular-lab suites

inline std::vector<CheckRow> minorization_suite(std::size_t pairs = 1000) {
    std::vector<CheckRow> rows;
    for (auto seed : kFixtureSeeds) {
        const TabularMdp mdp = fixture_mdp(seed);
        Rng rng = make_rng(seed, 0x31);
        double excess = -std::numeric_limits<double>::infinity(), touch = 0.0;
        for (std::size_t k = 0; k < pairs; ++k) {
            const TabularPolicy ref = random_policy(mdp, rng);
            const TabularPolicy mu = random_policy(mdp, rng);
            const MinorizerBasis b = minorizer_basis(mdp, ref);
            excess = std::max(excess, lower_bound(mdp, b, mu) - objective_j(mdp, mu));
            touch = std::max(touch, std::abs(lower_bound(mdp, b, ref) - b.j_ref));
        }
        const std::string tag = "seed" + std::to_string(seed);
        rows.push_back(check_le("minorization", tag + ":max(lb-J)", excess, 1e-10));
        rows.push_back(check_le("minorization", tag + ":max|lb(ref;ref)-J(ref)|", touch, 1e-10));
    }
    return rows;
}

inline std::vector<CheckRow> gradient_suite(std::size_t policies_per_fixture = 5) {
    std::vector<CheckRow> rows;
    for (auto seed : kFixtureSeeds) {
        const TabularMdp mdp = fixture_mdp(seed);
        Rng rng = make_rng(seed, 0x32);
        double e_om = 0, e_phi = 0, e_drp_lb = 0, e_drp_j = 0, e_lbg = 0;
        for (std::size_t k = 0; k < policies_per_fixture; ++k) {
            const TabularPolicy mu = random_policy(mdp, rng);
            e_om = std::max(e_om, max_rel_error(grad_omega(mdp, mu), oracle::fd_grad_omega(mdp, mu)));
            e_phi = std::max(e_phi, max_rel_error(grad_phi(mdp, mu), oracle::fd_grad_phi(mdp, mu)));
            const MinorizerBasis b = minorizer_basis(mdp, mu);
            const Mat drp = drp_grad(mdp, mu);
            const Mat fd_lb = oracle::fd_policy_grad([&](const TabularPolicy& p) { return lower_bound(mdp, b, p); }, mu);
            const Mat fd_j = oracle::fd_policy_grad([&](const TabularPolicy& p) { return objective_j(mdp, p); }, mu);
            e_drp_lb = std::max(e_drp_lb, max_rel_error(drp, fd_lb));
            e_drp_j = std::max(e_drp_j, max_rel_error(drp, fd_j));
            const TabularPolicy other = random_policy(mdp, rng);
            const Mat fd_other =
                oracle::fd_policy_grad([&](const TabularPolicy& p) { return lower_bound(mdp, b, p); }, other);
            e_lbg = std::max(e_lbg, max_rel_error(lower_bound_grad(mdp, b, other), fd_other));
        }
        const std::string tag = "seed" + std::to_string(seed);
        rows.push_back(check_le("gradient", tag + ":grad_omega_vs_fd", e_om, 1e-5));
        rows.push_back(check_le("gradient", tag + ":grad_phi_vs_fd", e_phi, 1e-5));
        rows.push_back(check_le("gradient", tag + ":drp_grad_vs_fd_lower_bound", e_drp_lb, 1e-5));
        rows.push_back(check_le("gradient", tag + ":drp_grad_vs_fd_J_tangency", e_drp_j, 1e-5));
        rows.push_back(check_le("gradient", tag + ":lower_bound_grad_vs_fd", e_lbg, 1e-5));
    }
    return rows;
}

// Sampling on the one-hot embedding of a fixture: s ~ (1 - gamma) d, s' ~ T(s, mu(s)).

inline NetSpec linear_policy_spec(const TabularMdp& mdp) {
    NetSpec s;
    s.input_dim = mdp.n_states;
    s.output_dim = mdp.action_dim;
    return s;
}

inline TabularPolicy tabular_policy_of(const OneHotTabularDomain& dom, const NetParams& policy) {
    const auto n = static_cast<Eigen::Index>(dom.mdp().n_states);
    return net_predict(policy, Mat::Identity(n, n));
}

inline std::vector<Transition> sample_on_policy(const OneHotTabularDomain& dom, const TabularPolicy& mu,
                                                std::size_t count, Rng& rng) {
    const TabularMdp& mdp = dom.mdp();
    const Vec d = occupancy(mdp, mu) * (1.0 - mdp.gamma);
    std::discrete_distribution<std::size_t> S(d.data(), d.data() + d.size());
    std::vector<Transition> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = S(rng);
        const Vec x = dom.one_hot(s);
        const Vec a = action_of(mu, s);
        out.push_back({x, a, mdp.rew(s, a), dom.sample_next(x, a, rng), false});
    }
    return out;
}

/// Exact V of the current tabular policy as a ValueFn over one-hot rows.
inline ValueFn exact_value_fn(const OneHotTabularDomain& dom, const TabularPolicy& mu) {
    const Vec V = policy_eval(dom.mdp(), mu);
    return [V](const Mat& states) { return Vec(states * V); };
}

/// Expected parameter gradient of the linear one-hot policy: (1 - gamma) times
/// the tabular DRP gradient, routed through d mu / d theta.
inline Vec exact_linear_policy_gradient(const OneHotTabularDomain& dom, const NetParams& policy) {
    const TabularPolicy mu = tabular_policy_of(dom, policy);
    const auto n = static_cast<Eigen::Index>(dom.mdp().n_states);
    const Mat per_state = (1.0 - dom.mdp().gamma) * drp_grad_baseline(dom.mdp(), mu);
    auto fwd = net_forward(policy, Mat::Identity(n, n));
    return net_backward(policy, fwd.cache, per_state).param_grad;
}

struct EstimatorStats {
    Vec mean;
    Vec std_error;
    Vec exact;
    double total_variance = 0.0;  // sum of per-component sample variances
};

inline EstimatorStats estimator_stats(const OneHotTabularDomain& dom, const NetParams& policy, std::size_t samples,
                                      bool baseline, std::uint64_t seed) {
    const TabularPolicy mu = tabular_policy_of(dom, policy);
    const ValueFn V = exact_value_fn(dom, mu);
    Rng rng = make_rng(seed, 0x33);
    const auto P = policy.values.size();
    Vec sum = Vec::Zero(P), sq = Vec::Zero(P);
    std::size_t done = 0;
    while (done < samples) {
        const std::size_t chunk = std::min<std::size_t>(4096, samples - done);
        const auto batch = sample_on_policy(dom, mu, chunk, rng);
        const auto est = estimate_policy_gradient(dom, policy, Normalizer::identity(static_cast<Eigen::Index>(dom.state_dim())),
                                                  batch, V, dom.mdp().gamma, baseline, true);
        if (est.skipped) throw std::logic_error("estimator_stats: unexpected out-of-support sample");
        sum += est.per_sample.colwise().sum().transpose();
        sq += est.per_sample.array().square().matrix().colwise().sum().transpose();
        done += chunk;
    }
    const double n = static_cast<double>(samples);
    EstimatorStats st;
    st.mean = sum / n;
    const Vec var = ((sq / n).array() - st.mean.array().square()).matrix() * (n / (n - 1.0));
    st.std_error = (var / n).cwiseSqrt();
    st.total_variance = var.sum();
    st.exact = exact_linear_policy_gradient(dom, policy);
    return st;
}

inline NetParams fixture_linear_policy(const TabularMdp& mdp, std::uint64_t seed) {
    NetParams p = net_init(linear_policy_spec(mdp), seed);
    p.values *= 0.8;  // keeps mu(s) = W_s + b inside the [-1, 1] action box
    return p;
}

inline std::vector<CheckRow> baseline_suite(std::size_t variance_samples = 10000) {
    std::vector<CheckRow> rows;
    for (auto seed : kFixtureSeeds) {
        const TabularMdp mdp = fixture_mdp(seed);
        Rng rng = make_rng(seed, 0x34);
        double worst = 0.0;
        for (int k = 0; k < 5; ++k) {
            const TabularPolicy mu = random_policy(mdp, rng);
            worst = std::max(worst, (drp_grad_baseline(mdp, mu) - drp_grad(mdp, mu)).cwiseAbs().maxCoeff());
        }
        rows.push_back(check_le("baseline", "seed" + std::to_string(seed) + ":max|drp_baseline-drp|", worst, 1e-12));
    }
    const OneHotTabularDomain dom(fixture_mdp(1));
    const NetParams policy = fixture_linear_policy(dom.mdp(), 1);
    const double with = estimator_stats(dom, policy, variance_samples, true, 11).total_variance;
    const double without = estimator_stats(dom, policy, variance_samples, false, 11).total_variance;
    rows.push_back(check_le("baseline", "seed1:var_with/var_without", with / without, 1.0));
    return rows;
}

inline std::vector<CheckRow> mm_suite(const MmOptions& opt = {}) {
    std::vector<CheckRow> rows;
    for (auto seed : kFixtureSeeds) {
        const TabularMdp mdp = fixture_mdp(seed);
        const auto its = mm_iterate(mdp, TabularPolicy::Zero(static_cast<Eigen::Index>(mdp.n_states), 1), opt);
        double drop = 0.0;
        for (std::size_t k = 1; k < its.size(); ++k) drop = std::max(drop, its[k - 1].j - its[k].j);
        const double opt_j = oracle::grid_optimum(mdp).j;
        const std::string tag = "seed" + std::to_string(seed);
        rows.push_back(check_le("mm", tag + ":max_J_decrease", drop, 1e-10));
        rows.push_back(check_le("mm", tag + ":rel_gap_to_grid_optimum", (opt_j - its.back().j) / std::abs(opt_j), 0.01));
    }
    return rows;
}

inline std::vector<CheckRow> riemann_suite() {
    std::vector<CheckRow> rows;
    for (bool action_dep : {true, false}) {
        const ContinuousMdp1d c = continuous_fixture(action_dep);
        auto jn = [&](std::size_t n) {
            const auto disc = riemann_discretize(c, n);
            return objective_j(disc.mdp, disc.policy(continuous_fixture_policy));
        };
        const double ref = jn(512);
        double prev = std::numeric_limits<double>::infinity(), worst_ratio = 0.0;
        for (std::size_t n : {8, 16, 32, 64, 128}) {
            const double e = std::abs(jn(n) - ref);
            worst_ratio = std::max(worst_ratio, e / prev);
            prev = e;
        }
        const std::string tag = action_dep ? "action_dependent" : "action_independent";
        // strict decrease: every successive error ratio below 1
        CheckRow r = check_le("riemann", tag + ":max_error_ratio", worst_ratio, 1.0);
        r.pass = r.pass && worst_ratio < 1.0;
        rows.push_back(r);
        if (!action_dep)
            rows.push_back(check_le("riemann", tag + ":|J128-quadrature|",
                                    std::abs(jn(128) - oracle::nystrom_objective(c, continuous_fixture_policy)), 1e-3));
    }
    return rows;
}

inline std::vector<CheckRow> estimator_suite(std::size_t samples = 100000) {
    std::vector<CheckRow> rows;
    const OneHotTabularDomain dom(fixture_mdp(1));
    const NetParams policy = fixture_linear_policy(dom.mdp(), 1);
    const auto st = estimator_stats(dom, policy, samples, true, 7);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < st.mean.size(); ++i)
        worst = std::max(worst, std::abs(st.mean(i) - st.exact(i)) / st.std_error(i));
    rows.push_back(check_le("estimator", "seed1:max|mean-exact|/stderr", worst, 3.0));
    return rows;
}

// ---------------------------------------------------------------------------
// Finite-difference suites for networks and domains

inline std::vector<NetSpec> shipped_net_specs() {
    std::vector<NetSpec> out;
    for (const auto& hidden : {std::vector<std::size_t>{2048}, std::vector<std::size_t>{256, 128, 64, 32}}) {
        NetSpec policy;
        policy.input_dim = 20;
        policy.hidden_layers = hidden;
        policy.output_dim = 20;
        policy.output = OutputActivation::bounded(Vec::Zero(20), Vec::Ones(20));
        policy.use_layer_norm = true;
        out.push_back(policy);
        NetSpec critic;
        critic.input_dim = 4;
        critic.hidden_layers = hidden;
        critic.output_dim = 1;
        critic.use_layer_norm = true;
        critic.encoder = Encoder{2, 32, 32};
        out.push_back(critic);
    }
    return out;
}

struct NetGradErrors {
    double params = 0.0;
    double inputs = 0.0;
};

/// With 1e-6 the summed 20-output head leaves ~1e-9 of roundoff in each
/// difference, which swamps coordinates whose gradient is near 1e-5.
inline constexpr double kNetFdStep = 1e-5;

/// Scalar head sum(C .* net(X)) over a small random batch.
inline NetGradErrors net_grad_errors(const NetSpec& spec, std::uint64_t seed, std::size_t param_coords = 100) {
    Rng rng = make_rng(seed, 0x35);
    std::normal_distribution<double> N(0.0, 1.0);
    const NetParams p = net_init(spec, seed);
    Mat X(2, static_cast<Eigen::Index>(spec.input_dim));
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = N(rng);
    Mat C(2, static_cast<Eigen::Index>(spec.output_dim));
    for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = N(rng);
    auto fwd = net_forward(p, X);
    const auto back = net_backward(p, fwd.cache, C);
    NetGradErrors e;
    GradCheckOptions po;
    po.eps = kNetFdStep;
    po.subset = param_coords;
    po.seed = seed;
    e.params = grad_check(
        [&](const Vec& v) {
            NetParams q{spec, v};
            return (net_predict(q, X).array() * C.array()).sum();
        },
        p.values, back.param_grad, po);
    const Eigen::Map<const Vec> xflat(X.data(), X.size());
    const Eigen::Map<const Vec> gflat(back.input_grad.data(), back.input_grad.size());
    e.inputs = grad_check(
        [&](const Vec& v) {
            const Eigen::Map<const Mat> Xv(v.data(), X.rows(), X.cols());
            return (net_predict(p, Xv).array() * C.array()).sum();
        },
        Vec(xflat), Vec(gflat), GradCheckOptions{kNetFdStep, std::nullopt, seed, 1e-6});
    return e;
}

inline std::string describe_spec(const NetSpec& s) {
    return std::string(s.encoder ? "critic[" : "policy[") + format_layers(s.hidden_layers) + "]";
}

inline std::vector<CheckRow> network_suite() {
    std::vector<CheckRow> rows;
    for (const auto& spec : shipped_net_specs())
        for (auto seed : kFixtureSeeds) {
            const auto e = net_grad_errors(spec, seed);
            const std::string tag = describe_spec(spec) + ":seed" + std::to_string(seed);
            rows.push_back(check_le("network", tag + ":params", e.params, 1e-4));
            rows.push_back(check_le("network", tag + ":inputs", e.inputs, 1e-4));
        }
    return rows;
}

/// Random (s, a) whose transition mean sits well inside the state box.
inline std::pair<Vec, Vec> interior_pair(const DomainModel& d, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(d.state_dim());
    const auto m = static_cast<Eigen::Index>(d.action_dim());
    Vec s(n), a(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double lo = d.sample_lo()(i), hi = d.sample_hi()(i);
        const double pad = 0.1 * (hi - lo);
        s(i) = std::uniform_real_distribution<double>(lo + pad, hi - pad)(rng);
    }
    for (Eigen::Index j = 0; j < m; ++j)
        a(j) = std::uniform_real_distribution<double>(d.action_lo()(j), d.action_hi()(j))(rng);
    return {s, a};
}

/// Next state drawn from the model whose log-density stays finite under a
/// finite-difference probe of the action (reservoir residuals kept >= 0.5).
inline Vec supported_next(const DomainModel& d, const Vec& s, const Vec& a, Rng& rng) {
    for (int k = 0; k < 1000; ++k) {
        Vec x = d.sample_next(s, a, rng);
        bool ok = true;
        for (std::size_t j = 0; j < d.state_dim() && ok; ++j) {
            const auto [lo, hi] = d.coord_support(j, s, a);
            ok = x(static_cast<Eigen::Index>(j)) > lo + 0.5 && x(static_cast<Eigen::Index>(j)) < hi;
        }
        if (ok || d.name() != "res20") return x;
    }
    throw std::runtime_error("supported_next: no sample with comfortable support margin");
}

struct DomainCertOptions {
    std::size_t fd_points = 50;
    std::size_t density_pairs = 10;
    std::size_t score_samples = 100000;
};

inline std::vector<CheckRow> domain_suite(const DomainCertOptions& opt = {}) {
    std::vector<CheckRow> rows;
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    for (const auto& name : domain_names()) {
        const DomainPtr dom = make_domain(name);
        const DomainModel& d = *dom;
        Rng rng = make_rng(std::hash<std::string>{}(name), 0x36);
        double e_r = 0.0, e_t = 0.0, e_norm = 0.0;
        GradCheckOptions fd;
        fd.abs_floor = 1e-8;
        // rewards are at most quadratic in a, so a wide step costs no truncation error
        GradCheckOptions fd_r = fd;
        fd_r.eps = 1e-4;
        for (std::size_t k = 0; k < opt.fd_points; ++k) {
            const auto [s, a] = interior_pair(d, rng);
            e_r = std::max(e_r, grad_check([&](const Vec& x) { return d.reward(s, x); }, a, d.reward_grad_action(s, a), fd_r));
            const Vec next = supported_next(d, s, a, rng);
            e_t = std::max(e_t, grad_check([&](const Vec& x) { return d.log_trans_density(s, x, next); }, a,
                                           d.log_trans_grad_action(s, a, next), fd));
        }
        for (std::size_t k = 0; k < opt.density_pairs; ++k) {
            const auto [s, a] = interior_pair(d, rng);
            for (std::size_t j = 0; j < d.state_dim(); ++j) {
                const auto [lo, hi] = d.coord_support(j, s, a);
                const double mass =
                    GK::integrate([&](double x) { return d.coord_density(j, s, a, x); }, lo, hi, 15, 1e-12);
                e_norm = std::max(e_norm, std::abs(mass - 1.0));
            }
        }
        const auto [s0, a0] = interior_pair(d, rng);
        const auto m = static_cast<Eigen::Index>(d.action_dim());
        Vec sum = Vec::Zero(m), sq = Vec::Zero(m);
        for (std::size_t k = 0; k < opt.score_samples; ++k) {
            const Vec g = d.log_trans_grad_action(s0, a0, d.sample_next(s0, a0, rng));
            sum += g;
            sq += g.cwiseAbs2();
        }
        const double n = static_cast<double>(opt.score_samples);
        double worst_z = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double mean = sum(j) / n;
            const double se = std::sqrt(std::max(0.0, sq(j) / n - mean * mean) / (n - 1.0));
            worst_z = std::max(worst_z, se > 0.0 ? std::abs(mean) / se : (mean == 0.0 ? 0.0 : INFINITY));
        }
        rows.push_back(check_le("domain", name + ":reward_grad_vs_fd", e_r, 1e-6));
        rows.push_back(check_le("domain", name + ":log_trans_grad_vs_fd", e_t, 1e-5));
        rows.push_back(check_le("domain", name + ":max|coord_mass-1|", e_norm, 1e-3));
        rows.push_back(check_le("domain", name + ":max|score_mean|/stderr", worst_z, 3.0));
    }
    return rows;
}

/// Suites of the `verify` verb.
inline std::vector<CheckRow> verify_all() {
    std::vector<CheckRow> rows;
    for (const auto& part : {minorization_suite(), gradient_suite(), baseline_suite(), mm_suite(), riemann_suite(),
                             estimator_suite()})
        rows.insert(rows.end(), part.begin(), part.end());
    return rows;
}

/// Suites of the `gradcheck` verb.
inline std::vector<CheckRow> gradcheck_all() {
    std::vector<CheckRow> rows;
    for (const auto& part : {network_suite(), domain_suite(), gradient_suite()})
        rows.insert(rows.end(), part.begin(), part.end());
    return rows;
}

}  // namespace ilbo

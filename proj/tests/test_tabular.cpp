#include "ilbo/fixtures.hpp"
#include "ilbo/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace ilbo;

namespace {

// Fixture with its reward replaced by the constant c.
TabularMdp constant_reward(TabularMdp m, double c) {
    m.rew = [c](std::size_t, const Vec&) { return c; };
    m.rew_grad = [](std::size_t, const Vec& a) { return Vec(Vec::Zero(a.size())); };
    return m;
}

// Fixed transition matrix (action independent) and reward 1 + w_s a.
TabularMdp matrix_mdp(Mat P, Vec b0, double gamma, Vec w) {
    TabularMdp m;
    m.n_states = static_cast<std::size_t>(P.rows());
    m.b0 = std::move(b0);
    m.gamma = gamma;
    m.action_lo = Vec::Constant(1, -1.0);
    m.action_hi = Vec::Constant(1, 1.0);
    m.trans = [P](std::size_t s, const Vec&) { return Vec(P.row(static_cast<Eigen::Index>(s)).transpose()); };
    m.trans_jac = [P](std::size_t, const Vec&) { return Mat(Mat::Zero(P.rows(), 1)); };
    m.rew = [w](std::size_t s, const Vec& a) { return 1.5 + w(static_cast<Eigen::Index>(s)) * a(0); };
    m.rew_grad = [w](std::size_t s, const Vec&) { return Vec(Vec::Constant(1, w(static_cast<Eigen::Index>(s)))); };
    m.validate();
    return m;
}

// Two states; from either state, go to 0 with probability (1 + a) / 2.
TabularMdp linear_two_state(double gamma) {
    TabularMdp m;
    m.n_states = 2;
    m.b0 = (Vec(2) << 0.3, 0.7).finished();
    m.gamma = gamma;
    m.action_lo = Vec::Constant(1, -1.0);
    m.action_hi = Vec::Constant(1, 1.0);
    m.trans = [](std::size_t, const Vec& a) { return Vec((Vec(2) << 0.5 * (1 + a(0)), 0.5 * (1 - a(0))).finished()); };
    m.trans_jac = [](std::size_t, const Vec&) { return Mat((Mat(2, 1) << 0.5, -0.5).finished()); };
    m.rew = [](std::size_t s, const Vec& a) { return 1.0 + 0.5 * static_cast<double>(s) + 0.25 * a(0); };
    m.rew_grad = [](std::size_t, const Vec&) { return Vec(Vec::Constant(1, 0.25)); };
    m.validate();
    return m;
}

// Same MDP with state labels permuted by perm (new index k holds old state perm[k]).
TabularMdp permuted(const TabularMdp& m, const std::vector<std::size_t>& perm) {
    TabularMdp p = m;
    const auto n = static_cast<Eigen::Index>(m.n_states);
    Eigen::PermutationMatrix<Eigen::Dynamic> Pm(n);
    for (Eigen::Index k = 0; k < n; ++k) Pm.indices()(k) = static_cast<int>(perm[static_cast<std::size_t>(k)]);
    // (Pm^T x)(k) = x(perm[k])
    p.b0 = Pm.transpose() * m.b0;
    p.trans = [m, Pm, perm](std::size_t s, const Vec& a) { return Vec(Pm.transpose() * m.trans(perm[s], a)); };
    p.trans_jac = [m, Pm, perm](std::size_t s, const Vec& a) { return Mat(Pm.transpose() * m.trans_jac(perm[s], a)); };
    p.rew = [m, perm](std::size_t s, const Vec& a) { return m.rew(perm[s], a); };
    p.rew_grad = [m, perm](std::size_t s, const Vec& a) { return m.rew_grad(perm[s], a); };
    return p;
}

TabularPolicy random_mu(const TabularMdp& m, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x99);
    return random_policy(m, rng);
}

void expect_rows_pass(const std::vector<CheckRow>& rows) {
    ASSERT_FALSE(rows.empty());
    for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.suite << " " << r.property << " " << r.measured;
}

}  // namespace

TEST(Tabular, ValidateRejectsBadMdps) {
    TabularMdp m = fixture_mdp(1);
    EXPECT_NO_THROW(m.validate());
    TabularMdp bad = m;
    bad.gamma = 1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = m;
    bad.b0(0) += 0.1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = m;
    bad.action_hi = bad.action_lo;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = m;
    bad.trans = nullptr;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    EXPECT_THROW(check_policy(m, TabularPolicy::Zero(4, 1)), std::invalid_argument);
    TabularPolicy nan_mu = TabularPolicy::Zero(5, 1);
    nan_mu(2, 0) = std::nan("");
    EXPECT_THROW(objective_j(m, nan_mu), std::invalid_argument);
}

TEST(Tabular, PolicyEvalUnitRewardIsGeometric) {
    for (auto seed : kFixtureSeeds) {
        const TabularMdp m = constant_reward(fixture_mdp(seed, 5, 0.9), 1.0);
        const Vec V = policy_eval(m, random_mu(m, seed));
        for (Eigen::Index s = 0; s < V.size(); ++s) EXPECT_NEAR(V(s), 10.0, 1e-10);
    }
}

TEST(Tabular, PolicyEvalMatchesTruncatedEnumeration) {
    for (double gamma : {0.5, 0.9}) {
        const TabularMdp m = linear_two_state(gamma);
        TabularPolicy mu(2, 1);
        mu << 0.3, -0.8;
        const Vec V = policy_eval(m, mu);
        const int H = static_cast<int>(std::ceil(std::log(1e-10) / std::log(gamma)));
        // Forward propagation of the state distribution, independent of the linear solve.
        for (std::size_t s0 = 0; s0 < 2; ++s0) {
            Vec dist = Vec::Zero(2);
            dist(static_cast<Eigen::Index>(s0)) = 1.0;
            double v = 0.0, disc = 1.0;
            for (int t = 0; t < H; ++t) {
                Vec next = Vec::Zero(2);
                for (std::size_t s = 0; s < 2; ++s) {
                    const Vec a = action_of(mu, s);
                    v += disc * dist(static_cast<Eigen::Index>(s)) * m.rew(s, a);
                    next += dist(static_cast<Eigen::Index>(s)) * m.trans(s, a);
                }
                dist = next;
                disc *= gamma;
            }
            EXPECT_NEAR(V(static_cast<Eigen::Index>(s0)), v, 1e-8 / (1 - gamma)) << gamma;
        }
    }
}

TEST(Tabular, RelabelingPermutesValues) {
    const TabularMdp m = fixture_mdp(2);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    const TabularMdp p = permuted(m, perm);
    const TabularPolicy mu = random_mu(m, 4);
    TabularPolicy pmu(5, 1);
    for (std::size_t k = 0; k < 5; ++k) pmu(static_cast<Eigen::Index>(k), 0) = mu(static_cast<Eigen::Index>(perm[k]), 0);
    const Vec V = policy_eval(m, mu), pV = policy_eval(p, pmu);
    const Vec d = occupancy(m, mu), pd = occupancy(p, pmu);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_NEAR(pV(static_cast<Eigen::Index>(k)), V(static_cast<Eigen::Index>(perm[k])), 1e-12);
        EXPECT_NEAR(pd(static_cast<Eigen::Index>(k)), d(static_cast<Eigen::Index>(perm[k])), 1e-12);
    }
    EXPECT_NEAR(objective_j(p, pmu), objective_j(m, mu), 1e-12);
}

TEST(Tabular, OccupancyMassAndAbsorbingState) {
    for (auto seed : kFixtureSeeds)
        for (double gamma : {0.5, 0.9, 0.99}) {
            const TabularMdp m = fixture_mdp(seed, 5, gamma);
            EXPECT_NEAR((1.0 - gamma) * occupancy(m, random_mu(m, seed)).sum(), 1.0, 1e-10);
        }
    const TabularMdp one = matrix_mdp(Mat::Ones(1, 1), Vec::Ones(1), 0.9, Vec::Zero(1));
    EXPECT_NEAR(occupancy(one, TabularPolicy::Zero(1, 1))(0), 10.0, 1e-12);

    // State 2 absorbs everything: every start eventually sits there.
    Mat P(3, 3);
    P << 0, 1, 0, 0, 0, 1, 0, 0, 1;
    const TabularMdp chain = matrix_mdp(P, (Vec(3) << 1, 0, 0).finished(), 0.5, Vec::Zero(3));
    const Vec d = occupancy(chain, TabularPolicy::Zero(3, 1));
    EXPECT_NEAR(d(0), 1.0, 1e-12);
    EXPECT_NEAR(d(1), 0.5, 1e-12);
    EXPECT_NEAR(d(2), 0.25 / 0.5, 1e-12);
}

TEST(Tabular, OccupancyMatchesMonteCarlo) {
    const TabularMdp m = fixture_mdp(1);
    const TabularPolicy mu = random_mu(m, 1);
    const Vec d = occupancy(m, mu);
    const Mat P = transition_matrix(m, mu);
    const int H = 60;  // 0.5^60 is far below the Monte-Carlo resolution
    const std::size_t runs = 100000;
    Rng rng = make_rng(77);
    std::discrete_distribution<int> start(m.b0.data(), m.b0.data() + m.b0.size());
    std::vector<std::discrete_distribution<int>> rows;
    for (Eigen::Index s = 0; s < 5; ++s) {
        const Vec r = P.row(s).transpose();
        rows.emplace_back(r.data(), r.data() + r.size());
    }
    Vec sum = Vec::Zero(5), sq = Vec::Zero(5);
    for (std::size_t k = 0; k < runs; ++k) {
        Vec x = Vec::Zero(5);
        int s = start(rng);
        double disc = 1.0;
        for (int t = 0; t < H; ++t) {
            x(s) += disc;
            disc *= m.gamma;
            s = rows[static_cast<std::size_t>(s)](rng);
        }
        sum += x;
        sq += x.cwiseProduct(x);
    }
    const double n = static_cast<double>(runs);
    for (Eigen::Index s = 0; s < 5; ++s) {
        const double mean = sum(s) / n;
        const double se = std::sqrt((sq(s) / n - mean * mean) / (n - 1.0));
        EXPECT_LE(std::abs(mean - d(s)), 3.0 * se) << s;
    }
}

TEST(Tabular, ObjectiveExamples) {
    for (auto seed : kFixtureSeeds) {
        const TabularMdp m = fixture_mdp(seed);
        const TabularMdp c = constant_reward(m, 2.5);
        const TabularPolicy mu = random_mu(m, seed + 10);
        EXPECT_NEAR(objective_j(c, mu), 2.5 / (1 - m.gamma), 1e-12);
        const double dual = occupancy(m, mu).dot(reward_vector(m, mu));
        EXPECT_NEAR(objective_j(m, mu), dual, 1e-10);
        EXPECT_GE(objective_j(m, mu), 0.0);
    }
}

TEST(Tabular, GradOmegaExamples) {
    // State 2 has no start mass and no inflow.
    Mat P(3, 3);
    P << 0.5, 0.5, 0, 0.2, 0.8, 0, 0.3, 0.3, 0.4;
    const TabularMdp m = matrix_mdp(P, (Vec(3) << 0.5, 0.5, 0).finished(), 0.9, (Vec(3) << 0.1, 0.2, 0.3).finished());
    const TabularPolicy mu = TabularPolicy::Constant(3, 1, 0.5);
    const Vec g = grad_omega(m, mu);
    EXPECT_EQ(g(2), 0.0);
    EXPECT_GT(g(0), 0.0);
    const Mat gp = grad_phi(m, mu);
    EXPECT_EQ(gp(0, 2), 0.0);
    EXPECT_EQ(gp(1, 2), 0.0);
    EXPECT_EQ(gp.row(2).cwiseAbs().maxCoeff(), 0.0);

    for (auto seed : kFixtureSeeds) {
        const TabularMdp f = fixture_mdp(seed);
        const TabularPolicy p = random_mu(f, seed);
        EXPECT_LE(max_rel_error(grad_omega(f, p), oracle::fd_grad_omega(f, p)), 1e-5);
        const TabularMdp unit = constant_reward(f, 1.0);
        EXPECT_LE((grad_omega(unit, p) - occupancy(unit, p)).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Tabular, GradPhiExamples) {
    // p(0 | s, a = -1) = 0 in the linear two-state MDP.
    const TabularMdp m = linear_two_state(0.9);
    TabularPolicy mu(2, 1);
    mu << -1.0, 0.2;
    const Mat g = grad_phi(m, mu);
    EXPECT_EQ(g(0, 0), 0.0);
    EXPECT_GT(g(0, 1), 0.0);

    for (auto seed : kFixtureSeeds) {
        const TabularMdp f = fixture_mdp(seed);
        const TabularPolicy p = random_mu(f, seed + 1);
        const Mat gp = grad_phi(f, p);
        EXPECT_LE(max_rel_error(gp, oracle::fd_grad_phi(f, p)), 1e-5);
        const Vec d = occupancy(f, p), V = policy_eval(f, p);
        const Mat P = transition_matrix(f, p);
        for (Eigen::Index s = 0; s < 5; ++s) EXPECT_NEAR(gp.row(s).sum(), f.gamma * d(s) * P.row(s).dot(V), 1e-12);
    }
}

TEST(Tabular, LowerBoundTouchAndMinorization) {
    for (auto seed : kFixtureSeeds) {
        const TabularMdp m = fixture_mdp(seed);
        Rng rng = make_rng(seed, 5);
        for (int k = 0; k < 1000; ++k) {
            const TabularPolicy ref = random_policy(m, rng);
            const TabularPolicy mu = random_policy(m, rng);
            EXPECT_LE(lower_bound(m, mu, ref), objective_j(m, mu) + 1e-10);
            if (k < 50) {
                EXPECT_NEAR(lower_bound(m, ref, ref), objective_j(m, ref), 1e-10);
            }
        }
    }
}

TEST(Tabular, ConstantRewardLeavesOnlyTransitionTerms) {
    const TabularMdp base = fixture_mdp(3);
    const TabularPolicy ref = random_mu(base, 1), mu = random_mu(base, 2);
    double gap1 = 0.0;
    for (double c : {1.0, 4.0}) {
        const TabularMdp m = constant_reward(base, c);
        const MinorizerBasis b = minorizer_basis(m, ref);
        const Mat P = transition_matrix(m, mu), Pr = transition_matrix(m, ref);
        const double phi_terms = (b.g_phi.array() * (P.array().log() - Pr.array().log())).sum();
        const double lb = lower_bound(m, b, mu);
        EXPECT_NEAR(lb, b.j_ref + phi_terms, 1e-12);
        if (c == 1.0) {
            gap1 = lb - b.j_ref;
        } else {
            EXPECT_NEAR(lb - b.j_ref, c * gap1, 1e-12);
        }
    }
}

TEST(Tabular, LowerBoundZeroProbabilityGuard) {
    const TabularMdp m = linear_two_state(0.9);
    const TabularPolicy ref = TabularPolicy::Zero(2, 1);
    const TabularPolicy mu = TabularPolicy::Constant(2, 1, -1.0);
    EXPECT_EQ(lower_bound(m, mu, ref), -std::numeric_limits<double>::infinity());
    // The reverse direction is finite: zero-probability entries of the reference carry no weight.
    EXPECT_TRUE(std::isfinite(lower_bound(m, ref, mu)));
}

TEST(Tabular, DrpGradientExamples) {
    for (auto seed : kFixtureSeeds) {
        const TabularMdp m = fixture_mdp(seed);
        const TabularPolicy mu = random_mu(m, seed + 7);
        const Mat g = drp_grad(m, mu);
        EXPECT_LE((drp_grad_baseline(m, mu) - g).cwiseAbs().maxCoeff(), 1e-12);
        const Mat fd = oracle::fd_policy_grad([&](const TabularPolicy& p) { return objective_j(m, p); }, mu);
        EXPECT_LE(max_rel_error(g, fd), 1e-5);
    }
    Mat P(3, 3);
    P << 0.1, 0.6, 0.3, 0.5, 0.25, 0.25, 0.2, 0.2, 0.6;
    const Vec w = (Vec(3) << 0.3, -0.2, 0.4).finished();
    const TabularMdp fixed = matrix_mdp(P, (Vec(3) << 0.2, 0.3, 0.5).finished(), 0.8, w);
    const TabularPolicy mu = TabularPolicy::Constant(3, 1, 0.1);
    const Vec d = occupancy(fixed, mu);
    const Mat g = drp_grad(fixed, mu);
    for (Eigen::Index s = 0; s < 3; ++s) EXPECT_NEAR(g(s, 0), d(s) * w(s), 1e-14);
}

TEST(Tabular, MmMonotoneAndNearGridOptimum) {
    for (auto seed : kFixtureSeeds) {
        const TabularMdp m = fixture_mdp(seed);
        const auto its = mm_iterate(m, TabularPolicy::Zero(5, 1));
        ASSERT_EQ(its.size(), 21u);
        for (std::size_t k = 1; k < its.size(); ++k) {
            EXPECT_GE(its[k].j, its[k - 1].j - 1e-10);
            if (its[k].accepted) {
                EXPECT_GT(its[k].bound_gain, 0.0);
            }
            EXPECT_TRUE((its[k].policy.array().abs() <= 1.0).all());
        }
        const double best = oracle::grid_optimum(m).j;
        EXPECT_LE((best - its.back().j) / best, 0.01) << seed;
    }
}

TEST(Tabular, MmFromOptimalPolicyStaysPut) {
    // Reward increasing in a, transitions fixed: a = 1 everywhere is optimal.
    Mat P(3, 3);
    P << 0.1, 0.6, 0.3, 0.5, 0.25, 0.25, 0.2, 0.2, 0.6;
    const TabularMdp fixed = matrix_mdp(P, (Vec(3) << 0.2, 0.3, 0.5).finished(), 0.8, (Vec(3) << 0.3, 0.2, 0.4).finished());
    const auto grid = oracle::grid_optimum(fixed, 201);
    ASSERT_TRUE((grid.policy.array() == 1.0).all());
    const auto its = mm_iterate(fixed, grid.policy);
    for (const auto& it : its) EXPECT_NEAR(it.j, grid.j, 1e-8);

    // Interior optimum on a fixture: refine with a long MM run, confirm against
    // the grid, then restart from it.
    const TabularMdp m = fixture_mdp(1);
    MmOptions long_run;
    long_run.outer_iters = 300;
    const TabularPolicy refined = mm_iterate(m, TabularPolicy::Zero(5, 1), long_run).back().policy;
    const double j_ref = objective_j(m, refined);
    ASSERT_GE(j_ref, oracle::grid_optimum(m).j - 1e-8);
    for (const auto& it : mm_iterate(m, refined)) EXPECT_NEAR(it.j, j_ref, 1e-8);
}

TEST(Tabular, RiemannGridAndUniformStart) {
    const auto disc = riemann_discretize(continuous_fixture(), 4);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(disc.mdp.b0(i), 0.25, 1e-15);
    EXPECT_NEAR(disc.grid.width, 0.25, 1e-15);
    EXPECT_DOUBLE_EQ(disc.grid.points(0), 0.125);
    EXPECT_DOUBLE_EQ(disc.grid.points(3), 0.875);
    EXPECT_THROW(RiemannGrid(0.0, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(RiemannGrid(1.0, 1.0, 4), std::invalid_argument);
    EXPECT_THROW(riemann_discretize(continuous_fixture(), 1), std::invalid_argument);
}

TEST(Tabular, RiemannRowsAreSimplexWithExactJacobian) {
    const auto disc = riemann_discretize(continuous_fixture(), 16);
    const TabularMdp& m = disc.mdp;
    for (std::size_t s = 0; s < 16; s += 5) {
        const Vec a = Vec::Constant(1, 0.3);
        const Vec p = m.trans(s, a);
        EXPECT_NEAR(p.sum(), 1.0, 1e-14);
        EXPECT_TRUE((p.array() >= 0.0).all());
        const double h = 1e-6;
        const Vec fd = (m.trans(s, Vec::Constant(1, 0.3 + h)) - m.trans(s, Vec::Constant(1, 0.3 - h))) / (2 * h);
        EXPECT_LE((m.trans_jac(s, a).col(0) - fd).cwiseAbs().maxCoeff(), 1e-8);
    }
    // Midpoint mass error shrinks with refinement.
    EXPECT_LT(riemann_discretize(continuous_fixture(), 128).max_row_mass_error, disc.max_row_mass_error);
    EXPECT_TRUE(riemann_discretize(continuous_fixture(), 128).warnings.empty());
}

TEST(Tabular, RiemannWarnsOnEscapingMass) {
    ContinuousMdp1d c = continuous_fixture();
    // Uniform density on [0, 2]: half the mass lands outside [0, 1].
    c.density = [](double, double, double) { return 0.5; };
    c.density_grad = [](double, double, double) { return 0.0; };
    const auto disc = riemann_discretize(c, 8);
    EXPECT_FALSE(disc.warnings.empty());
    EXPECT_NEAR(disc.max_row_mass_error, 0.5, 1e-12);
    EXPECT_NEAR(disc.mdp.trans(0, Vec::Zero(1)).sum(), 1.0, 1e-14);
}

TEST(Tabular, VerificationSuitesPass) {
    expect_rows_pass(minorization_suite(200));
    expect_rows_pass(gradient_suite());
    expect_rows_pass(baseline_suite());
    expect_rows_pass(mm_suite());
    expect_rows_pass(riemann_suite());
}

TEST(Tabular, CheckCsvFormat) {
    std::ostringstream os;
    write_check_csv(os, {check_le("s", "p", 0.5, 1.0), check_le("s", "q", 2.0, 1.0), check_le("s", "n", NAN, 1.0)});
    const std::string out = os.str();
    EXPECT_EQ(out.rfind("suite,property,measured,tolerance,pass\n", 0), 0u);
    EXPECT_NE(out.find("s,p,0.5,1,pass"), std::string::npos);
    EXPECT_NE(out.find("s,q,2,1,FAIL"), std::string::npos);
    EXPECT_NE(out.find(",FAIL\n", out.find("s,n")), std::string::npos);
}

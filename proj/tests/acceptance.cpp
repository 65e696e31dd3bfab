// One PASS/FAIL line per acceptance criterion; nonzero exit when any fails.
#include "ilbo/harness.hpp"
#include "ilbo/verify.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace ilbo;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && s > limit_s) {
        o.pass = false;
        o.detail += " over time limit " + format_double(limit_s) + "s";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-28s %7.1fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), s, o.detail.c_str());
    std::fflush(stdout);
}

Outcome from_rows(const std::vector<CheckRow>& rows) {
    std::ostringstream os;
    std::size_t bad = 0;
    for (const auto& r : rows)
        if (!r.pass) {
            ++bad;
            os << ' ' << r.suite << ':' << r.property << '=' << format_double(r.measured);
        }
    if (rows.empty()) return {false, "no rows"};
    return {bad == 0, std::to_string(rows.size() - bad) + "/" + std::to_string(rows.size()) + " rows" + os.str()};
}

std::string scratch_root() {
    std::random_device rd;
    return (std::filesystem::temp_directory_path() / ("ilbo_acceptance_" + std::to_string(rd()))).string();
}

Outcome desk_scale() {
    const std::string out = scratch_root();
    const ExperimentConfig cfg = resolve_config({}, {{"domain", "nav2"}, {"seeds", "1,2,3"}, {"episodes", "500"}, {"out", out}});
    const DomainPtr dom = make_domain("nav2");
    const auto& nav = dynamic_cast<const Navigation&>(*dom);

    // Straight line to the goal at full speed.
    const Vec goal = nav.params().goal;
    const PolicyFn oracle = [&](const Vec& s) {
        const Vec d = goal - s;
        return Vec(d / std::max(1.0, d.lpNorm<Eigen::Infinity>()));
    };
    Rng orng = make_rng(99);
    double oracle_sum = 0.0;
    for (int k = 0; k < 64; ++k) oracle_sum += rollout(*dom, oracle, orng, dom->default_init_state()).total_reward();
    const double oracle_mean = oracle_sum / 64.0;

    std::vector<double> untrained;
    for (auto seed : cfg.seeds) {
        const Agent fresh(dom, cfg.agent, static_cast<std::uint64_t>(seed));
        untrained.push_back(evaluate_from(fresh, std::nullopt, 64, static_cast<std::uint64_t>(seed)).mean_return);
    }
    const auto summary = run_experiment(cfg);
    std::filesystem::remove_all(out);

    std::ostringstream os;
    os << "oracle " << format_double(oracle_mean);
    bool ok = !summary.partial && summary.seeds.size() == 3;
    for (std::size_t i = 0; i < summary.seeds.size(); ++i) {
        const auto& s = summary.seeds[i];
        if (!s.ok) {
            os << " seed " << s.seed << " failed: " << s.error;
            ok = false;
            continue;
        }
        for (const auto& r : s.records) ok = ok && std::isfinite(r.eval_mean) && std::isfinite(r.eval_std) &&
                                            std::isfinite(r.best_mean) && std::isfinite(r.td_loss) &&
                                            std::isfinite(r.grad_norm) && std::isfinite(r.sigma);
        const double closed = (s.best_mean - untrained[i]) / (oracle_mean - untrained[i]);
        os << " | seed " << s.seed << " untrained " << format_double(untrained[i]) << " best "
           << format_double(s.best_mean) << " closed " << format_double(closed);
        ok = ok && closed >= 0.5;
    }
    return {ok, os.str()};
}

Outcome protocol() {
    std::ostringstream os;
    bool ok = true;
    auto expect = [&](bool c, const std::string& what) {
        if (!c) {
            ok = false;
            os << " [" << what << "]";
        }
    };

    // Hyperparameter defaults.
    const AgentConfig c;
    expect(c.q_lr == 0.001 && c.policy_lr == 0.0001, "learning rates");
    expect(c.q_store_capacity == 1000000 && c.policy_store_capacity == 1000, "store sizes");
    expect(c.minibatch_q == 64 && c.minibatch_policy == 64, "minibatch sizes");
    expect(c.tau == 0.005, "tau");
    expect(c.gamma == 0.99, "gamma");
    const ExperimentConfig e = resolve_config({}, {{"out", "unused"}});
    expect(e.episodes == 5000 && e.eval_trajectories == 64, "episode budget / trajectories");

    // Soft update: one call moves the targets by tau toward the online nets.
    {
        Agent a(make_domain("nav2"), c, 5);
        const Vec before = a.policy_target().values;
        a.mutable_policy().values.array() += 1.0;
        a.update_targets();
        const double moved = (a.policy_target().values - before).cwiseAbs().maxCoeff();
        const double least = (a.policy_target().values - before).cwiseAbs().minCoeff();
        expect(std::abs(moved - 0.005) < 1e-12 && std::abs(least - 0.005) < 1e-12, "soft update step");
    }

    // Evaluation: 64 trajectories, policy action without exploration noise.
    const Agent agent(make_domain("nav2"), c, 7);
    const auto ev = evaluate_from(agent, std::nullopt, 64, 3);
    expect(ev.returns.size() == 64, "64 trajectories");
    expect(agent.sigma() > 0.0, "agent has exploration noise to ignore");
    {
        Rng r1 = make_rng(11), r2 = make_rng(11);
        const EvalResult direct = agent.evaluate(1, {}, r1);
        Rng unused = make_rng(0);
        const PolicyFn greedy = [&](const Vec& s) { return agent.act(s, false, unused); };
        const double manual = rollout(agent.domain(), greedy, r2, agent.domain().default_init_state()).total_reward();
        expect(direct.returns.front() == manual, "evaluation is noise-free");
    }

    // Generalization: 10 starts, 5 near and 5 far, agent untouched.
    for (const auto& name : domain_names()) {
        AgentConfig small;
        small.policy_hidden = small.q_hidden = {16};
        const Agent g(make_domain(name), small, 2);
        std::ostringstream before, after;
        write_checkpoint(before, g.to_checkpoint());
        const auto rows = generalize(g, 10, 1);
        write_checkpoint(after, g.to_checkpoint());
        std::size_t near = 0;
        for (const auto& r : rows) near += r.near;
        expect(rows.size() == 10 && near == 5, name + " 10 rows 5/5");
        expect(before.str() == after.str(), name + " no retraining");
    }
    os << (ok ? "defaults, tau, 64 noise-free trajectories, 10 starts (5/5)" : "");
    return {ok, os.str()};
}

}  // namespace

int main() {
    criterion("minorization", 30, [] { return from_rows(minorization_suite()); });
    criterion("gradient-identities", 60, [] { return from_rows(gradient_suite()); });
    criterion("baseline-identity", 0, [] { return from_rows(baseline_suite()); });
    criterion("mm-monotonicity", 120, [] { return from_rows(mm_suite()); });
    criterion("riemann-convergence", 60, [] { return from_rows(riemann_suite()); });
    criterion("network-gradients", 120, [] { return from_rows(network_suite()); });
    criterion("domain-models", 180, [] { return from_rows(domain_suite()); });
    criterion("estimator-unbiasedness", 180, [] { return from_rows(estimator_suite()); });
    criterion("desk-scale-learning", 900, desk_scale);
    criterion("protocol-fidelity", 0, protocol);
    std::printf("%s (%d failed)\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}

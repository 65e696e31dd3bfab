// ilbo: train, evaluate and verify ILBO planners from the command line.
//
//   ilbo train      --domain nav2 [--config FILE] [--seed N] [--episodes N] [--out DIR]
//   ilbo eval       --ckpt FILE [--init-state "x,y,..."] [--seed N] [--out DIR]
//   ilbo generalize --ckpt FILE [--seed N] [--out DIR]
//   ilbo verify     [--out DIR]
//   ilbo gradcheck  [--out DIR]
//
// Exit status: 0 success, 1 failed verification or run, 2 usage error.

#include "ilbo/harness.hpp"
#include "ilbo/verify.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

int run_checks(const std::vector<ilbo::CheckRow>& rows, const std::string& out, const std::string& file) {
    ilbo::write_check_csv(std::cout, rows);
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream os(std::filesystem::path(out) / file);
        ilbo::write_check_csv(os, rows);
    }
    return ilbo::all_pass(rows) ? 0 : 1;
}

ilbo::Agent load_agent(const std::string& path) {
    if (path.empty()) throw UsageError("--ckpt is required");
    return ilbo::agent_from_checkpoint(ilbo::load_checkpoint(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative lower-bound optimization planner"};
    app.require_subcommand(1);

    std::string domain, config, out, ckpt, init_state;
    std::int64_t seed = 0;
    std::size_t episodes = 0;

    auto* train = app.add_subcommand("train", "train agents for every configured seed");
    train->add_option("--domain", domain, "nav2, hvac6 or res20");
    train->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "train this single seed");
    train->add_option("--episodes", episodes, "training episodes per seed");
    train->add_option("--out", out, "output directory (default $ILBO_OUT/<domain>)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with noise-free rollouts");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--init-state", init_state, "comma-separated start state");
    eval->add_option("--seed", seed, "evaluation seed");
    eval->add_option("--out", out, "also write eval.csv here");

    auto* gen = app.add_subcommand("generalize", "evaluate a checkpoint from 10 new start states");
    gen->add_option("--ckpt", ckpt, "checkpoint file")->required();
    gen->add_option("--seed", seed, "sampling and evaluation seed");
    gen->add_option("--out", out, "also write generalize.csv here");

    auto* verify = app.add_subcommand("verify", "run the tabular property suites");
    verify->add_option("--out", out, "also write verify.csv here");

    auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference suites");
    gradcheck->add_option("--out", out, "also write gradcheck.csv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            ilbo::KeyValues file, cli;
            try {
                if (!config.empty()) file = ilbo::load_config_file(config);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            if (!domain.empty()) cli.emplace_back("domain", domain);
            if (train->count("--seed")) cli.emplace_back("seeds", std::to_string(seed));
            if (train->count("--episodes")) cli.emplace_back("episodes", std::to_string(episodes));
            if (!out.empty()) cli.emplace_back("out", out);
            ilbo::ExperimentConfig cfg;
            try {
                cfg = ilbo::resolve_config(file, cli);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            const auto summary = ilbo::run_experiment(cfg, &std::cerr);
            std::cout << "summary " << (std::filesystem::path(cfg.out) / "summary.csv").string() << " mean_best "
                      << ilbo::format_double(summary.mean_best) << " std_best " << ilbo::format_double(summary.std_best)
                      << (summary.partial ? " (partial)" : "") << '\n';
            return summary.partial ? 1 : 0;
        }
        if (*eval) {
            const ilbo::Agent agent = load_agent(ckpt);
            std::optional<ilbo::Vec> start;
            if (!init_state.empty()) {
                try {
                    start = ilbo::parse_vector(init_state);
                } catch (const std::invalid_argument& e) {
                    throw UsageError(std::string("--init-state: ") + e.what());
                }
                if (!agent.domain().in_state_box(*start)) throw UsageError("--init-state outside the state box");
            }
            const auto ev = ilbo::evaluate_from(agent, start, 64, static_cast<std::uint64_t>(seed));
            std::ostringstream csv;
            csv << "mean_return,std_return,n_traj\n"
                << ilbo::format_double(ev.mean_return) << ',' << ilbo::format_double(ev.std_return) << ','
                << ev.returns.size() << '\n';
            std::cout << csv.str();
            if (!out.empty()) {
                std::filesystem::create_directories(out);
                std::ofstream(std::filesystem::path(out) / "eval.csv") << csv.str();
            }
            return 0;
        }
        if (*gen) {
            const ilbo::Agent agent = load_agent(ckpt);
            const auto rows = ilbo::generalize(agent, 10, static_cast<std::uint64_t>(seed));
            ilbo::write_generalize_csv(std::cout, rows);
            if (!out.empty()) {
                std::filesystem::create_directories(out);
                std::ofstream os(std::filesystem::path(out) / "generalize.csv");
                ilbo::write_generalize_csv(os, rows);
            }
            return 0;
        }
        if (*verify) return run_checks(ilbo::verify_all(), out, "verify.csv");
        if (*gradcheck) return run_checks(ilbo::gradcheck_all(), out, "gradcheck.csv");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

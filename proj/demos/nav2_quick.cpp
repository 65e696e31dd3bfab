// Short nav2 training run with the default hyperparameters.
#include "ilbo/harness.hpp"

#include <cstdio>

int main(int argc, char** argv) {
    const std::size_t episodes = argc > 1 ? static_cast<std::size_t>(std::stoul(argv[1])) : 100;
    ilbo::Agent agent(ilbo::make_domain("nav2"), ilbo::AgentConfig{}, 1);
    std::printf("untrained %.3f\n", ilbo::evaluate_from(agent, std::nullopt, 64, 0).mean_return);
    ilbo::TrainOptions opt;
    opt.episodes = episodes;
    opt.eval_every = std::min<std::size_t>(25, episodes);
    opt.seed = 1;
    ilbo::train(agent, opt, [](const ilbo::RunRecord& r, const ilbo::Agent&, bool) {
        std::printf("episode %4lld  eval %9.3f  best %9.3f  td %.4f\n", static_cast<long long>(r.episode), r.eval_mean,
                    r.best_mean, r.td_loss);
    });
}

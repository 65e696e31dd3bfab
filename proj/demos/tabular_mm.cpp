// MM on a 5-state fixture: prints J per outer round next to the grid optimum.
#include "ilbo/verify.hpp"

#include <cstdio>

int main() {
    const ilbo::TabularMdp mdp = ilbo::fixture_mdp(1);
    const auto its = ilbo::mm_iterate(mdp, ilbo::TabularPolicy::Zero(5, 1));
    for (std::size_t m = 0; m < its.size(); ++m)
        std::printf("round %2zu  J %.10f  bound gain %.3e%s\n", m, its[m].j, its[m].bound_gain,
                    its[m].accepted ? "" : "  (rejected)");
    std::printf("grid optimum %.10f\n", ilbo::oracle::grid_optimum(mdp).j);
}

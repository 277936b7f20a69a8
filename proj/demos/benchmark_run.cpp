// Line benchmark with three-hop neighborhoods, compared against the centralized solution.

#include "conmax/sim.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv)
{
    using namespace conmax;
    const int steps = argc > 1 ? std::atoi(argv[1]) : 30;
    Scenario s = benchmark_scenario(Mode::distributed, 3, 1, 10, steps);
    s.paired_centralized = true;
    const RunResult result = run(s);
    for (const StepLog& log : result.steps)
        if (log.k % 5 == 0 || log.k + 1 == steps)
            std::cout << "k " << log.k << "  lambda2 " << log.lambda2_actual << "  statuses " << log.statuses << "\n";
    std::cout << "distributed final " << result.summary.final_lambda2 << ", centralized final "
              << *result.summary.centralized_final_lambda2 << ", ratio " << *result.summary.ratio << "\n";
}

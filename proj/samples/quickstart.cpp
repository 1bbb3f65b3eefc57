// Oracle-only walk through the pipeline: no training, runs in well under a second.
#include <iostream>

#include "simt/simt.hpp"

int main() {
    simt::SyntheticTaskConfig task_config;
    task_config.num_pairs = 200;
    const auto task = simt::generate_synthetic_task(task_config);
    const simt::SyntheticOracle oracle(task.vocab);

    const auto matrices = simt::divergence_matrices(oracle, task.pairs, simt::DivergenceMeasure::Cosine);
    std::cout << "pair 0 divergence (rows t, cols j):\n";
    simt::write_matrices(std::span(matrices).first(1), std::cout);

    std::vector<simt::EvaluationRun> runs;
    for (double lambda : {0.05, 0.5, 0.99}) {
        simt::SimulationLimits limits;
        limits.lambda = lambda;
        const auto results = simt::simulate_corpus(
            oracle, task.pairs,
            [&](std::size_t i) { return simt::Policy{simt::OracleMatrixPolicy{&matrices[i]}}; }, limits);
        runs.push_back(simt::evaluate_simulation("oracle", lambda, task.pairs, results, task.vocab));
    }
    for (int k : {1, 3, 5}) {
        const auto results = simt::simulate_corpus(
            oracle, task.pairs, [&](std::size_t) { return simt::Policy{simt::WaitKPolicy{k}}; }, {});
        runs.push_back(simt::evaluate_simulation("waitk", k, task.pairs, results, task.vocab));
    }
    std::cout << "\npolicy\top\tAL\tBLEU\n";
    for (const auto& r : runs)
        std::cout << r.policy << '\t' << r.operating_point << '\t' << r.mean_al << '\t' << r.bleu << '\n';
}

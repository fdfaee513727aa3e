#include <benchmark/benchmark.h>

#include <random>

#include "qnd/analysis.hpp"
#include "qnd/conditioned.hpp"
#include "qnd/filter.hpp"
#include "qnd/qdyn.hpp"

namespace {

using namespace qnd;

QndModel ladderModel(int d) {
    Eigen::VectorXcd cd(d), cc(d);
    for (int a = 0; a < d; ++a) {
        cd[a] = 1.0 - 2.0 * a / static_cast<double>(d - 1);
        cc[a] = 1.0 + a;
    }
    return QndModel::make(PointerBasis::withDim(d), Eigen::VectorXd::Zero(d),
                          {Channel::make(ChannelKind::Diffusive, cd),
                           Channel::make(ChannelKind::Counting, cc)});
}

Eigen::VectorXd uniformStart(int d) {
    return Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d));
}

void BM_SmeStep(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const auto general = embed(ladderModel(d));
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(d, d);
    for (int a = 0; a < d; ++a) rho(a, a) = 1.0 / d;
    NoiseIncrements noise;
    noise.dW = {1e-2};
    noise.u = {0.9};
    StepCounters ctr;
    for (auto _ : state) {
        rho = stepSme(general, rho, 1e-4, noise, &ctr);
        benchmark::DoNotOptimize(rho);
    }
}
BENCHMARK(BM_SmeStep)->Arg(2)->Arg(4)->Arg(8);

void BM_PopulationStep(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const auto model = ladderModel(d);
    Eigen::VectorXd q = uniformStart(d);
    const std::vector<double> dy{1e-2};
    const std::vector<int> jumps{0};
    StepCounters ctr;
    for (auto _ : state) {
        populationStep(model, q, dy, jumps, 1e-4, ctr);
        benchmark::DoNotOptimize(q);
    }
}
BENCHMARK(BM_PopulationStep)->Arg(2)->Arg(4)->Arg(8);

void BM_PopulationTrajectory(benchmark::State& state) {
    const auto model = ladderModel(2);
    std::uint64_t seed = 1;
    for (auto _ : state) {
        const auto traj = simulatePopulations(model, uniformStart(2), 1.0, 1e-3, seed++);
        benchmark::DoNotOptimize(traj.q.back());
    }
}
BENCHMARK(BM_PopulationTrajectory);

void BM_FilterTrajectory(benchmark::State& state) {
    const auto model = ladderModel(2);
    const auto truth = simulatePopulations(model, uniformStart(2), 1.0, 1e-3, 7);
    for (auto _ : state) {
        const auto series = filterPopulations(model, truth.record, uniformStart(2), 1e-3);
        benchmark::DoNotOptimize(series.back());
    }
}
BENCHMARK(BM_FilterTrajectory);

void BM_ConditionedExact(benchmark::State& state) {
    const auto model = ladderModel(2);
    std::uint64_t seed = 1;
    for (auto _ : state) {
        const auto run = simulateConditioned(model, 0, uniformStart(2), 1.0, 1e-3, seed++);
        benchmark::DoNotOptimize(run.logq.logq.back());
    }
}
BENCHMARK(BM_ConditionedExact);

void BM_DoleansEvaluation(benchmark::State& state) {
    const auto model = ladderModel(2);
    const auto truth =
        simulatePopulations(model, uniformStart(2), 1.0, 1e-3, 11, {.keepNoise = true});
    for (auto _ : state) {
        const auto logq = doleansLogPopulations(model, uniformStart(2), *truth.noise);
        benchmark::DoNotOptimize(logq.logq.back());
    }
}
BENCHMARK(BM_DoleansEvaluation);

}  // namespace

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}

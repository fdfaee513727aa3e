#include <doctest.h>

#include <cmath>

#include "qnd/analysis.hpp"
#include "qnd/conditioned.hpp"
#include "qnd/stats.hpp"
#include "test_support.hpp"

using namespace qnd;
using namespace qndtest;

TEST_CASE("conditioning on a pointer start pins the log populations") {
    const auto model = qubitDiffusive();
    Eigen::VectorXd e0(2);
    e0 << 1.0, 0.0;
    const auto run = simulateConditioned(model, 0, e0, 1.0, 1e-3, 21);
    for (const auto& lq : run.logq.logq) {
        CHECK(lq[0] == 0.0);
        CHECK(std::isinf(lq[1]));
        CHECK(lq[1] < 0.0);
    }
}

TEST_CASE("conditioned paths collapse to the conditioning pointer") {
    const auto model = qubitDiffusive();
    std::size_t above = 0;
    const std::size_t n = 300;
    for (std::size_t i = 0; i < n; ++i) {
        const auto run = simulateConditioned(model, 0, simplex2(0.5), 5.0, 1e-3, 400 + i);
        if (std::exp(run.logq.logq.back()[0]) > 0.99) ++above;
    }
    CHECK(static_cast<double>(above) / static_cast<double>(n) > 0.999);
}

TEST_CASE("degenerate conditioning is rejected") {
    const auto model = qubitCountingTheta(0.0, 2.0);
    CHECK_THROWS_AS(simulateConditioned(model, 0, simplex2(0.5), 1.0, 1e-3, 1),
                    DegenerateConditioning);
    const auto healthy = qubitDiffusive();
    CHECK_THROWS_AS(simulateConditioned(healthy, 1, simplex2(1.0), 1.0, 1e-3, 1),
                    DegenerateConditioning);  // q0[1] = 0
}

TEST_CASE("log populations stay normalized") {
    const auto model = mixedQubit();
    const auto run = simulateConditioned(model, 1, simplex2(0.3), 2.0, 1e-3, 33);
    for (const auto& lq : run.logq.logq) {
        std::vector<double> xs(lq.data(), lq.data() + lq.size());
        CHECK(std::abs(logSumExp(xs)) <= 1e-12);
    }
}

TEST_CASE("stochastic exponential with zero noise keeps the symmetric qubit balanced") {
    const auto model = qubitDiffusive();
    NoisePaths noise;
    noise.dt = 1e-3;
    noise.steps = 1000;
    noise.dW.assign(1, std::vector<double>(noise.steps, 0.0));
    const auto logq = doleansLogPopulations(model, simplex2(0.5), noise);
    for (const auto& lq : logq.logq) {
        CHECK(lq[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
        CHECK(lq[1] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    }
}

namespace {

double pathwiseDiscrepancy(const QndModel& model, const Eigen::VectorXd& q0,
                           const QTrajectory& truth) {
    const auto logq = doleansLogPopulations(model, q0, *truth.noise);
    double worst = 0.0;
    for (std::size_t k = 0; k < truth.q.size(); ++k)
        for (int a = 0; a < model.dim(); ++a)
            worst = std::max(worst, std::abs(std::exp(logq.logq[k][a]) - truth.q[k][a]));
    return worst;
}

// doleansLogPopulations with the Ito correction removed; used to show the
// cross-scheme bound has teeth
double mutatedDiscrepancy(const QndModel& model, const Eigen::VectorXd& q0,
                          const QTrajectory& truth) {
    const auto& noise = *truth.noise;
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    const int d = model.dim();
    Eigen::VectorXd logq(d), q(d);
    for (int a = 0; a < d; ++a) logq[a] = std::log(q0[a]);
    std::vector<std::size_t> idx(m, 0);
    std::vector<double> rbar, thbar;
    double worst = 0.0;
    for (std::size_t k = 0; k < noise.steps; ++k) {
        for (int a = 0; a < d; ++a) q[a] = std::exp(logq[a]);
        channelMeans(model, q, rbar, thbar);
        for (int a = 0; a < d; ++a) {
            double inc = 0.0;
            for (std::size_t i = 0; i < p; ++i)
                inc += (model.channels[i].r[a] - rbar[i]) * noise.dW[i][k];  // no -a^2 dt/2
            for (std::size_t j = 0; j < m; ++j) {
                int hits = 0;
                for (std::size_t t = idx[j];
                     t < noise.jumpSteps[j].size() && noise.jumpSteps[j][t] == k; ++t)
                    ++hits;
                if (hits)
                    inc += hits * std::log(model.channels[p + j].theta[a] / thbar[j]);
                inc -= (model.channels[p + j].theta[a] - thbar[j]) * noise.dt;
            }
            logq[a] += inc;
        }
        for (std::size_t j = 0; j < m; ++j)
            while (idx[j] < noise.jumpSteps[j].size() && noise.jumpSteps[j][idx[j]] == k)
                ++idx[j];
        std::vector<double> xs(logq.data(), logq.data() + d);
        const double norm = logSumExp(xs);
        for (int a = 0; a < d; ++a) logq[a] -= norm;
        for (int a = 0; a < d; ++a)
            worst = std::max(worst, std::abs(std::exp(logq[a]) - truth.q[k + 1][a]));
    }
    return worst;
}

}  // namespace

TEST_CASE("stochastic exponential tracks the Euler integrator on shared noise") {
    std::mt19937_64 rng(61);
    const double T = 10.0, dt = 1e-3;
    int mutatedCaught = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto model = weakCouplingModel(rng);
        const auto q0 = randomSimplex(rng, model.dim());
        const auto truth =
            simulatePopulations(model, q0, T, dt, 9000 + trial, {.keepNoise = true});
        CHECK(pathwiseDiscrepancy(model, q0, truth) <= 5.0 * dt);
        if (mutatedDiscrepancy(model, q0, truth) > 5.0 * dt) ++mutatedCaught;
    }
    // dropping the Ito correction must blow the same bound on most paths
    CHECK(mutatedCaught >= 5);
}

TEST_CASE("a jump on a zero-intensity channel drives the log population to -inf") {
    const auto model = qubitCountingTheta(0.0, 2.0);
    NoisePaths noise;
    noise.dt = 1e-3;
    noise.steps = 100;
    noise.jumpSteps.assign(1, {});
    noise.jumpSteps[0].push_back(50);
    const auto logq = doleansLogPopulations(model, simplex2(0.3), noise);
    CHECK(std::isfinite(logq.logq[50][0]));
    for (std::size_t k = 51; k < logq.logq.size(); ++k) {
        CHECK(std::isinf(logq.logq[k][0]));
        CHECK(logq.logq[k][1] == 0.0);
    }
}

TEST_CASE("log-ratio slope: diagonal cell is zero, conditioned fits match the rate") {
    const auto model = qubitDiffusive();
    const auto run = simulateConditioned(model, 0, simplex2(0.5), 10.0, 1e-3, 71);
    CHECK(logRatioSlope(run.logq, 0, 0, 1.0, 10.0) == 0.0);

    const std::size_t paths = 50;
    std::vector<double> slopes;
    for (std::size_t i = 0; i < paths; ++i) {
        const auto r = simulateConditioned(model, 0, simplex2(0.5), 10.0, 1e-3, 6000 + i);
        slopes.push_back(logRatioSlope(r.logq, 1, 0, 1.0, 10.0));
    }
    const double fitted = mean(slopes);
    CHECK(std::abs(-fitted - 8.0) / 8.0 < 0.10);
}

TEST_CASE("insufficient window is reported") {
    const auto model = qubitDiffusive();
    const auto run = simulateConditioned(model, 0, simplex2(0.5), 1.0, 1e-1, 3);
    CHECK_THROWS_AS(logRatioSlope(run.logq, 1, 0, 0.95, 1.0), InsufficientWindow);
}

TEST_CASE("hitting-time law closed forms") {
    const auto model = qubitCountingTheta(0.0, 2.0);
    CHECK(hittingTimeCdf(model, simplex2(0.3), 0, 0.0) == 0.0);
    Eigen::VectorXd e1(2);
    e1 << 0.0, 1.0;
    CHECK(hittingTimeCdf(model, e1, 0, 1.0) ==
          doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-9));
    // mass that never extinguishes: CDF(inf) = 0.7
    CHECK(hittingTimeCdf(model, simplex2(0.3), 0, 1e9) == doctest::Approx(0.7).epsilon(1e-9));
    // no extinction channels at all
    const auto healthy = qubitCountingTheta(4.0, 1.0);
    CHECK(hittingTimeCdf(healthy, simplex2(0.3), 0, 5.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(extinctionChannels(healthy, 0).empty());
    CHECK(extinctionChannels(model, 0) == std::vector<std::size_t>{0});
}

TEST_CASE("tilted measures mix back to the physical expectation") {
    const auto model = qubitDiffusive();
    const Eigen::VectorXd q0 = simplex2(0.3);
    const double T = 1.0, dt = 1e-3;
    const std::size_t n = 500;

    // E_P[q_0(T)] = q_0(0) by the martingale property; mix the tilted means
    double mixtureMean = 0.0, mixtureVar = 0.0;
    double indicatorMixture = 0.0, indicatorVar = 0.0;
    for (int g = 0; g < 2; ++g) {
        std::vector<double> vals, hits;
        for (std::size_t i = 0; i < n; ++i) {
            const auto run =
                simulateConditioned(model, g, q0, T, dt, 7000 + g * n + i);
            const double v = std::exp(run.logq.logq.back()[0]);
            vals.push_back(v);
            hits.push_back(v > 0.5 ? 1.0 : 0.0);
        }
        const double w = q0[g];
        mixtureMean += w * mean(vals);
        mixtureVar += w * w * sampleVariance(vals) / static_cast<double>(n);
        indicatorMixture += w * mean(hits);
        indicatorVar += w * w * sampleVariance(hits) / static_cast<double>(n);
    }
    CHECK(std::abs(mixtureMean - q0[0]) <= 3.0 * std::sqrt(mixtureVar));

    // physical-side Monte Carlo for the indicator functional
    std::vector<double> physHits;
    const std::size_t m = 600;
    for (std::size_t i = 0; i < m; ++i) {
        const auto traj = simulatePopulations(model, q0, T, dt, 8600 + i);
        physHits.push_back(traj.q.back()[0] > 0.5 ? 1.0 : 0.0);
    }
    const double physMean = mean(physHits);
    const double physVar = sampleVariance(physHits) / static_cast<double>(m);
    CHECK(std::abs(indicatorMixture - physMean) <=
          3.0 * std::sqrt(indicatorVar + physVar));
}

TEST_CASE("under the tilted measure the dark-channel first jump is exponential") {
    // theta = (0.5, 2): dark nowhere, but conditioning on gamma=1 makes the
    // counter a plain Poisson process with rate theta(0|1) = 2
    const auto model = qubitCountingTheta(0.5, 2.0);
    const std::size_t n = 2000;
    std::vector<double> firstJump;
    std::size_t total = 0;
    const double horizon = 4.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto run = simulateConditioned(model, 1, simplex2(0.3), horizon, 1e-2, 21000 + i);
        ++total;
        if (!run.noise.jumpTimes[0].empty()) firstJump.push_back(run.noise.jumpTimes[0].front());
    }
    const auto ks = ksOneSampleCensored(
        firstJump, total, [](double t) { return 1.0 - std::exp(-2.0 * t); }, horizon);
    CHECK(ks.pValue > 0.01);
}

TEST_CASE("conditioned law matches the physical subensemble (small two-sample KS)") {
    const auto model = qubitDiffusive();
    const Eigen::VectorXd q0 = simplex2(0.3);
    const double dt = 1e-3;
    const std::size_t checkpoint = 1000;  // t = 1

    std::vector<double> tilted;
    for (std::size_t i = 0; i < 400; ++i) {
        const auto run = simulateConditioned(model, 0, q0, 5.0, dt, 11000 + i);
        tilted.push_back(std::exp(run.logq.logq[checkpoint][0]));
    }
    std::vector<double> physical;
    for (std::size_t i = 0; i < 1400 && physical.size() < 400; ++i) {
        const auto traj = simulatePopulations(model, q0, 5.0, dt, 15000 + i);
        const auto oc = detectCollapse(traj.q.back());
        if (oc.resolved && oc.pointer == 0) physical.push_back(traj.q[checkpoint][0]);
    }
    REQUIRE(physical.size() >= 300);
    CHECK(ksTwoSample(tilted, physical).pValue > 0.01);
}

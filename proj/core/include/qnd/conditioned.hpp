#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "qnd/model.hpp"
#include "qnd/qdyn.hpp"

namespace qnd {

/// Driving noise of a conditioned run: under the tilted measure the
/// diffusive drivers are standard Brownian motions and the counters are
/// homogeneous Poisson processes with intensity theta(i|gamma).
struct ConditionedNoise {
    int gamma = 0;
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<std::vector<double>> brownian;   // X at grid times, size steps+1
    std::vector<std::vector<double>> jumpTimes;  // raw event times in (0, T]
};

/// Populations kept in log space; -inf encodes an exactly vanished
/// population. logsumexp over a row is 0 by construction.
struct LogPopulations {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> logq;
};

struct ConditionedRun {
    ConditionedNoise noise;
    LogPopulations logq;
};

/// Samples a population path conditioned on the limit pointer being gamma,
/// by drawing the tilted-measure noise and evaluating the exact stochastic
/// exponential of the population ratios (no time-discretization error in
/// the ratios). Requires q0[gamma] > 0 and positive counting intensities
/// at gamma.
ConditionedRun simulateConditioned(const QndModel& model, int gamma,
                                   const Eigen::VectorXd& q0, double T, double dt,
                                   std::uint64_t seed);

/// Evaluates the stochastic-exponential solution of the population system
/// by left-point quadrature with self-consistent channel means, driven by
/// recorded noise. A jump on a zero-intensity channel sends the population
/// to exactly -inf for good. Cross-checks the Euler integrator.
LogPopulations doleansLogPopulations(const QndModel& model, const Eigen::VectorXd& q0,
                                     const NoisePaths& noise);

/// OLS slope of log q_alpha - log q_gamma over [t0, t1]; needs at least 10
/// grid points where both are finite.
double logRatioSlope(const LogPopulations& logq, int alpha, int gamma, double t0, double t1);

/// Default fit window: discard the first 10% of the horizon as burn-in.
inline constexpr double kFitBurnInFraction = 0.1;

/// Analytic law of the extinction time of population alpha:
/// P(T(alpha) <= t) = 1 - sum_beta q0[beta] exp(-lambdaHit(alpha,beta) t).
/// Returns 0 when no counting channel extinguishes alpha.
double hittingTimeCdf(const QndModel& model, const Eigen::VectorXd& q0, int alpha, double t);

/// Counting channels (indices within the counting block) whose intensity
/// vanishes at pointer alpha; a jump on any of them kills q_alpha.
std::vector<std::size_t> extinctionChannels(const QndModel& model, int alpha);

}  // namespace qnd

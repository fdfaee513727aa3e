#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "qnd/conditioned.hpp"
#include "qnd/filter.hpp"
#include "qnd/model.hpp"
#include "qnd/qdyn.hpp"
#include "qnd/stats.hpp"

namespace qnd {

inline constexpr double kRateRelTolDefault = 0.10;

struct CollapseOutcome {
    bool resolved = false;
    int pointer = -1;
};

/// Numerical surrogate for the almost-sure limit: pointer alpha if
/// q_alpha at the horizon clears the threshold, Unresolved otherwise.
CollapseOutcome detectCollapse(const Eigen::VectorXd& qFinal,
                               double threshold = kCollapseThresholdDefault);

struct EnsembleOptions {
    double T = 1.0;
    double dt = 1e-3;
    std::size_t trajectories = 100;
    std::uint64_t seed = 1;
    std::vector<double> checkpoints;  // grid times; empty -> {T}
    double burnInFraction = kFitBurnInFraction;
    double collapseThreshold = kCollapseThresholdDefault;
    unsigned workers = 0;  // 0 -> hardware concurrency
    bool fitSlopes = true;
    bool trackExtinctions = true;
    bool keepPerTrajectory = false;  // retain per-trajectory checkpoint values
};

struct EnsembleSummary {
    std::size_t trajectories = 0;
    std::size_t unresolved = 0;
    Eigen::VectorXd collapseFrequency;  // resolved fraction per pointer
    std::vector<double> checkpoints;
    Eigen::MatrixXd checkpointMean;  // (checkpoint, alpha)
    Eigen::MatrixXd checkpointSe;
    // per (alpha, gamma): mean fitted slope of ln(q_alpha/q_gamma) among
    // trajectories that collapsed to gamma
    Eigen::MatrixXd slopeMean;
    Eigen::MatrixXd slopeSe;
    Eigen::MatrixXi slopeCount;
    // extinction statistics per alpha (only for pointers with extinction channels)
    std::vector<std::vector<double>> extinctionTimes;   // observed T(alpha) <= T, trajectory order
    std::vector<std::size_t> extinctionCensored;        // runs with no extinction by T
    StepCounters repairs;
    // optional per-trajectory data (trajectory order)
    std::vector<CollapseOutcome> outcomes;
    std::vector<Eigen::MatrixXd> perTrajectoryCheckpoints;  // each (checkpoint, alpha)
};

/// Runs independent population trajectories (seed + index each) on a small
/// worker pool and reduces with fixed-order pairwise sums, so the result
/// is identical for any worker count.
EnsembleSummary runPopulationEnsemble(const QndModel& model, const Eigen::VectorXd& q0,
                                      const EnsembleOptions& opts);

struct ZScoreEntry {
    int alpha = 0;
    double t = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double z = 0.0;
};

struct MartingaleResult {
    std::vector<ZScoreEntry> entries;
    bool pass = false;  // all |z| <= 3
};

/// E[q_alpha(t)] = q_alpha(0) turned into per-checkpoint z-scores.
MartingaleResult martingaleTest(const EnsembleSummary& summary, const Eigen::VectorXd& q0);

struct BornResult {
    ChiSquareResult chi2;
    std::size_t unresolved = 0;
    std::vector<double> observed;  // resolved collapse counts per pointer
    std::vector<double> expected;
};

/// Pearson chi-square of collapse counts against the initial populations.
/// Throws TooManyUnresolved when more than 1% of runs did not resolve.
BornResult bornTest(const EnsembleSummary& summary, const Eigen::VectorXd& q0);

struct HittingTestResult {
    KsResult ks;
    std::size_t observedExtinctions = 0;
    std::size_t censored = 0;
    double censoredFraction = 0.0;
    double expectedCensoredFraction = 0.0;  // analytic survival at the horizon
    double censorZ = 0.0;                   // binomial z of the censored count
};

/// Censored KS of observed extinction times of q_alpha against the
/// analytic exponential mixture. Throws NoExtinctionChannels when no
/// counting channel can extinguish alpha.
HittingTestResult hittingTimeTest(const QndModel& model, const Eigen::VectorXd& q0,
                                  const EnsembleSummary& summary, int alpha, double horizon);

enum class RateMode { UpsilonDetected, QGammaDirect };

struct RateCell {
    int alpha = 0;
    int gamma = 0;
    double fitted = 0.0;  // mean fitted slope (negative for decaying ratios)
    double se = 0.0;
    double target = 0.0;  // closed-form rate Lambda(alpha, gamma)
    double relError = 0.0;
    std::size_t fits = 0;
    bool applicable = false;
    bool ok = false;
};

/// Rate table check in collapse-detected mode: compares the slope fits
/// gathered by runPopulationEnsemble against the closed-form rates.
/// Throws EmptyCell when a pointer with initial mass and N >= 500 runs
/// attracted no trajectory.
std::vector<RateCell> rateReport(const QndModel& model, const Eigen::VectorXd& q0,
                                 const EnsembleSummary& summary,
                                 double relTol = kRateRelTolDefault);

struct ConditionedRateOptions {
    double T = 1.0;
    double dt = 1e-3;
    std::size_t paths = 200;
    std::uint64_t seed = 1;
    double burnInFraction = kFitBurnInFraction;
    double relTol = kRateRelTolDefault;
    unsigned workers = 0;
};

/// Rate table check under the tilted measures: exact-path slopes per
/// conditioning pointer. Degenerate pointers are reported as inapplicable.
std::vector<RateCell> rateReportConditioned(const QndModel& model, const Eigen::VectorXd& q0,
                                            const ConditionedRateOptions& opts);

struct FilterStabilityResult {
    std::size_t runs = 0;
    double medianFinalDistance = 0.0;
    double fractionWithinTol = 0.0;
    bool identityBitExact = false;  // same-initialization filter == truth, bitwise
    std::size_t supportWarnings = 0;
};

/// Mismatched-initialization filter ensemble: median final trace distance
/// plus a bit-exactness check of identically initialized runs.
FilterStabilityResult filterStabilityExperiment(const QndModel& model,
                                                const Eigen::VectorXd& q0,
                                                const Eigen::VectorXd& qTilde0, double T,
                                                double dt, std::size_t runs,
                                                std::uint64_t seed, unsigned workers = 0,
                                                double distanceTol = 0.01);

/// Shared worker-pool helper: applies fn(index) for index in [0, n).
void parallelFor(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace qnd

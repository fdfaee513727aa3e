#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "qnd/model.hpp"
#include "qnd/qdyn.hpp"

namespace qnd {

inline constexpr double kCollapseThresholdDefault = 1.0 - 1e-6;

/// An estimated trajectory driven purely by a measurement record, plus
/// diagnostics against the truth when the truth is available.
struct FilterRun {
    Eigen::VectorXd q0;       // truth initialization (empty when unknown)
    Eigen::VectorXd qTilde0;
    MeasurementRecord record;  // the data the filter consumed
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> qTilde;
    std::vector<double> traceDistance;  // 1/2 sum |q - qTilde|, empty without truth
    StepCounters repairs;
    /// Set when the estimate starts with zero mass on a pointer the truth
    /// populates; the stability guarantees are void in that regime.
    std::string supportWarning;

    /// ln(qTilde_alpha / qTilde_gamma) per step; NaN where either vanishes.
    std::vector<double> logRatio(int alpha, int gamma) const;
};

/// Integrates the estimate populations from the record alone: the filter
/// sees the dy increments and jump flags, never the hidden noise or the
/// true state. Uses the same step core and repair rules as the physical
/// integrator, so identical initialization reproduces the truth bit for
/// bit. Throws GridMismatch if dt does not match the record.
std::vector<Eigen::VectorXd> filterPopulations(const QndModel& model,
                                               const MeasurementRecord& record,
                                               const Eigen::VectorXd& qTilde0, double dt,
                                               StepCounters* counters = nullptr);

/// Convenience wrapper pairing a truth trajectory with a filter run and
/// computing the per-step trace distance.
FilterRun runFilter(const QndModel& model, const QTrajectory& truth,
                    const Eigen::VectorXd& qTilde0);

/// Slope of ln(qTilde_alpha / qTilde_Upsilon) with Upsilon detected from
/// the filter's own final state; the truth pointer is unobservable in the
/// estimation setting.
double filterLogRatioSlope(const FilterRun& run, int alpha,
                           double burnInFraction = 0.1,
                           double collapseThreshold = kCollapseThresholdDefault);

}  // namespace qnd

#pragma once

#include <string>
#include <vector>

#include "qnd/conditioned.hpp"
#include "qnd/filter.hpp"
#include "qnd/qdyn.hpp"

namespace qnd {

/// Trajectory CSV: `t, q_0..q_{d-1}, y_0..y_p, N_{p+1}..N_n`, one row per
/// stored step. Counting columns hold cumulative jump counts. The final
/// step is always written even when the stride does not divide it.
void writeTrajectoryCsv(const std::string& path, const std::vector<double>& times,
                        const std::vector<Eigen::VectorXd>& q, const MeasurementRecord& record,
                        std::size_t stride);

struct StoredTrajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> q;
    MeasurementRecord record;
};

/// Reads a trajectory CSV back, inferring the channel layout from the
/// header. Throws SchemaError on malformed input.
StoredTrajectory readTrajectoryCsv(const std::string& path);

/// Conditioned-run CSV: `t, logq_0..logq_{d-1}`.
void writeConditionedCsv(const std::string& path, const LogPopulations& logq,
                         std::size_t stride);

/// Filter CSV: `t, qtilde_0..qtilde_{d-1}, trace_distance` (the distance
/// column is omitted when the run has no truth to compare against).
void writeFilterCsv(const std::string& path, const FilterRun& run, std::size_t stride);

void writeTextArtifact(const std::string& path, const std::string& content);

}  // namespace qnd

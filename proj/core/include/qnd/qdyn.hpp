#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qnd/model.hpp"
#include "qnd/rng.hpp"

namespace qnd {

inline constexpr double kIntensityEps = 1e-12;   // below this a jump term is dropped
inline constexpr double kMaxIntensityDt = 0.1;   // one-jump-per-step guard
inline constexpr double kEigRepairFloor = -1e-8; // clip eigenvalues below this
inline constexpr double kEigInvalid = -1e-6;     // reject the step below this
inline constexpr double kDensityTol = 1e-10;     // hermiticity / trace tolerance

/// Lindblad drift L(rho) = -i[H,rho] + sum_i (C_i rho C_i* - 1/2 {C_i*C_i, rho}).
Eigen::MatrixXcd lindblad(const GeneralModel& model, const Eigen::MatrixXcd& rho);

/// Per-channel SME generators evaluated at rho.
struct SmeGenerators {
    std::vector<Eigen::MatrixXcd> jump;       // J_i(rho) = C_i rho C_i*
    std::vector<double> intensity;            // v_i(rho) = Tr[J_i(rho)]
    std::vector<Eigen::MatrixXcd> diffusion;  // H_i(rho) = C_i rho + rho C_i* - Tr[(C_i+C_i*)rho] rho
};

SmeGenerators smeGenerators(const GeneralModel& model, const Eigen::MatrixXcd& rho);

/// Smallest eigenvalue of a Hermitian matrix (closed form for d = 2).
double minEigenvalueHermitian(const Eigen::MatrixXcd& m);

/// Checks hermiticity, unit trace and positivity; throws StateInvalid.
void validateDensityMatrix(const Eigen::MatrixXcd& rho);

/// Driving noise for one step: one Gaussian increment per diffusive channel
/// (variance dt), one uniform draw per counting channel for jump thinning.
struct NoiseIncrements {
    std::vector<double> dW;
    std::vector<double> u;
};

struct StepCounters {
    std::uint64_t stateClips = 0;       // eigenvalue repairs of the density matrix
    std::uint64_t populationClips = 0;  // negative-population repairs
    std::uint64_t jumps = 0;
    std::uint64_t skippedJumps = 0;     // fired but vacuous (post-update intensity ~ 0)

    StepCounters& operator+=(const StepCounters& o) {
        stateClips += o.stateClips;
        populationClips += o.populationClips;
        jumps += o.jumps;
        skippedJumps += o.skippedJumps;
        return *this;
    }
};

/// The experimenter's data: per diffusive channel the cumulative output
/// y_i(t_k), per counting channel the steps at which the counter fired.
/// A jump stored at step k is counted by time t_{k+1}.
struct MeasurementRecord {
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<std::vector<double>> y;               // (p+1) x (steps+1), y[i][0] = 0
    std::vector<std::vector<std::size_t>> jumpSteps;  // per counting channel, ascending

    std::vector<double> jumpTimes(std::size_t countingChannel) const;
    std::size_t totalJumps() const;
};

/// Euler step of the full density-matrix SME. Jump decisions are thinned
/// against the pre-step intensities; the jump map applies after the
/// continuous update. Reusable across steps (holds no state).
Eigen::MatrixXcd stepSme(const GeneralModel& model, const Eigen::MatrixXcd& rho, double dt,
                         const NoiseIncrements& noise, StepCounters* counters = nullptr,
                         std::vector<int>* firedOut = nullptr);

struct Trajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> q;          // populations at each grid time
    std::vector<Eigen::MatrixXcd> states;    // full states, only when requested
    MeasurementRecord record;
    std::uint64_t seed = 0;
    StepCounters repairs;
};

struct TrajectoryOptions {
    bool storeStates = false;
};

/// Integrates the SME under the physical measure. Deterministic given
/// (model, rho0, T, dt, seed); one noise stream per channel.
Trajectory simulateTrajectory(const GeneralModel& model, const Eigen::MatrixXcd& rho0,
                              double T, double dt, std::uint64_t seed,
                              const TrajectoryOptions& opts = {});

/// Raw driving noise kept alongside a population trajectory so the same
/// path can be replayed through an independent scheme.
struct NoisePaths {
    double dt = 0.0;
    std::size_t steps = 0;
    std::vector<std::vector<double>> dW;              // per diffusive channel, size steps
    std::vector<std::vector<std::size_t>> jumpSteps;  // per counting channel
};

struct QTrajectory {
    double dt = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> q;
    MeasurementRecord record;
    std::optional<NoisePaths> noise;
    std::uint64_t seed = 0;
    StepCounters repairs;
};

struct PopulationOptions {
    bool keepNoise = false;
};

/// Channel means <r_i> and <theta_j> at the current populations. Both the
/// integrator and the population step use this one routine so their
/// floating-point results coincide bit for bit.
void channelMeans(const QndModel& model, const Eigen::VectorXd& q,
                  std::vector<double>& rbar, std::vector<double>& thbar);

/// One Euler step of the closed population system, written in innovation
/// form: the update reads only the record increments dy and the jump
/// multiplicities, never the hidden Brownian increments. Shared verbatim
/// by the physical integrator and the filter, which is what makes
/// identically-initialized filtering reproduce the truth exactly.
void populationStep(const QndModel& model, Eigen::VectorXd& q, std::span<const double> dy,
                    std::span<const int> jumpCounts, double dt, StepCounters& counters);

/// Integrates the d-dimensional population SDE (off-diagonals decouple for
/// diagonal models). Populations hit by a jump on a zero-intensity channel
/// stay exactly zero afterwards.
QTrajectory simulatePopulations(const QndModel& model, const Eigen::VectorXd& q0, double T,
                                double dt, std::uint64_t seed,
                                const PopulationOptions& opts = {});

/// Validates a population vector against the simplex within tolerance.
void validateSimplex(const Eigen::VectorXd& q, double tol = 1e-10);

/// Number of steps for horizon T; throws ConfigError unless T is an
/// integral multiple of dt.
std::size_t stepCount(double T, double dt);

}  // namespace qnd

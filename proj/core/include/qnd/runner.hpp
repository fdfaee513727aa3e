#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qnd/model.hpp"

namespace qnd {

enum class Experiment { Simulate, Conditioned, Filter, Hitting, VerifyAll, Replay };

Experiment parseExperimentName(const std::string& name);
std::string experimentName(Experiment e);

/// Batch-run description, read from a sectioned key-value file ([run]
/// section, same grammar as model files) and optionally overridden by
/// CLI flags.
struct RunConfig {
    std::string configPath;
    std::string modelPath;
    Experiment experiment = Experiment::VerifyAll;
    Eigen::VectorXd q0;
    std::optional<Eigen::VectorXd> qTilde0;
    double T = 1.0;
    double dt = 1e-3;
    std::size_t trajectories = 100;
    std::uint64_t seed = 1;
    std::size_t stride = 1;
    std::string outDir = "out";
    int gamma = -1;
    unsigned workers = 0;
    std::size_t storeCount = 4;   // how many leading trajectories get CSV artifacts
    std::string trajectoryPath;   // replay input
    std::vector<std::pair<std::string, std::string>> echo;  // raw config entries

    /// Resolves a path relative to the config file location.
    std::string resolvePath(const std::string& p) const;
};

RunConfig parseRunConfigText(const std::string& text, const std::string& configPath);
RunConfig loadRunConfig(const std::string& path);

/// Validates invariants that need the model (dimension agreement and the
/// worst-case step-size guard max theta * dt <= 0.1).
void validateConfigAgainstModel(const RunConfig& cfg, const GeneralModel& model);

/// Executes the experiment and writes all artifacts under cfg.outDir.
/// Returns the process exit code: 0 on success, 4 when a verification
/// test fails. Configuration and numerical errors are thrown.
int runExperiment(const RunConfig& cfg);

/// Reruns the filter on a stored trajectory CSV; output depends only on
/// the file contents, so identical inputs give byte-identical artifacts.
int replay(const std::string& trajectoryPath, const std::string& modelPath,
           const Eigen::VectorXd& qTilde0, const std::string& outDir);

}  // namespace qnd

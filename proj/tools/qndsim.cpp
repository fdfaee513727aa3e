#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "qnd/errors.hpp"
#include "qnd/runner.hpp"

namespace {

constexpr const char* kFooter = R"(Experiments:
  simulate     integrate the full density-matrix SME, write trajectory CSVs
  conditioned  exact population paths conditioned on the limit pointer gamma
  filter       estimated trajectories driven by recorded outputs
  hitting      extinction-time statistics against the analytic law
  verify_all   full verification battery -> report.json
  replay       rerun the filter on a stored trajectory CSV

Exit codes:
  0  success / all applicable verification tests passed
  1  internal error
  2  configuration or schema error
  3  numerical guard violation (step size, state validity, degeneracy)
  4  verification or statistical test failure
)";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qndsim - batch simulator for continuous-time QND measurement trajectories"};
    app.footer(kFooter);

    std::string configPath;
    std::string experiment;
    std::string outDir;
    std::string trajectory;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::size_t stride = 0;
    bool haveSeed = false, haveStride = false;

    app.add_option("--config", configPath, "run configuration file")->required();
    app.add_option("--experiment", experiment, "override the experiment named in the config");
    app.add_option("--seed", seed, "override the base seed")->each([&](const std::string&) {
        haveSeed = true;
    });
    app.add_option("--workers", workers, "worker threads (0 = hardware)");
    app.add_option("--out", outDir, "override the output directory");
    app.add_option("--stride", stride, "override the CSV storage stride")
        ->each([&](const std::string&) { haveStride = true; });
    app.add_option("--trajectory", trajectory, "stored trajectory CSV (replay)");

    CLI11_PARSE(app, argc, argv);

    try {
        qnd::RunConfig cfg = qnd::loadRunConfig(configPath);
        if (!experiment.empty()) cfg.experiment = qnd::parseExperimentName(experiment);
        if (haveSeed) cfg.seed = seed;
        if (workers != 0) cfg.workers = workers;
        if (!outDir.empty()) cfg.outDir = outDir;
        if (haveStride) cfg.stride = stride;
        if (!trajectory.empty()) cfg.trajectoryPath = trajectory;
        const int code = qnd::runExperiment(cfg);
        if (code == 0)
            std::cout << "ok: artifacts written to " << cfg.outDir << "\n";
        else
            std::cout << "verification failed: see " << cfg.outDir << "/report.json\n";
        return code;
    } catch (const qnd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exitCode();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}

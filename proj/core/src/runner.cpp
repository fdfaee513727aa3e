#include "qnd/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <limits>

#include "qnd/analysis.hpp"
#include "qnd/artifacts.hpp"
#include "qnd/model_io.hpp"

namespace qnd {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kPValueFloor = 0.01;
constexpr double kFilterDistanceTol = 0.01;
constexpr std::size_t kConditionedFitPaths = 200;

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

Experiment parseExperimentName(const std::string& name) {
    const std::string n = lower(name);
    if (n == "simulate") return Experiment::Simulate;
    if (n == "conditioned") return Experiment::Conditioned;
    if (n == "filter") return Experiment::Filter;
    if (n == "hitting") return Experiment::Hitting;
    if (n == "verify_all" || n == "verify-all" || n == "verifyall") return Experiment::VerifyAll;
    if (n == "replay") return Experiment::Replay;
    throw ConfigError("unknown experiment '" + name + "'");
}

std::string experimentName(Experiment e) {
    switch (e) {
        case Experiment::Simulate: return "simulate";
        case Experiment::Conditioned: return "conditioned";
        case Experiment::Filter: return "filter";
        case Experiment::Hitting: return "hitting";
        case Experiment::VerifyAll: return "verify_all";
        case Experiment::Replay: return "replay";
    }
    return "?";
}

std::string RunConfig::resolvePath(const std::string& p) const {
    namespace fs = std::filesystem;
    fs::path candidate(p);
    if (candidate.is_absolute() || configPath.empty()) return p;
    return (fs::path(configPath).parent_path() / candidate).string();
}

RunConfig parseRunConfigText(const std::string& text, const std::string& configPath) {
    RunConfig cfg;
    cfg.configPath = configPath;
    bool sawRun = false;
    for (const auto& sec : parseKvText(text)) {
        if (sec.name != "run")
            throw ConfigError("config file supports only a [run] section, got [" + sec.name + "]",
                              sec.line);
        if (sawRun) throw ConfigError("duplicate [run] section", sec.line);
        sawRun = true;
        for (const auto& e : sec.entries) {
            cfg.echo.emplace_back(e.key, e.value);
            if (e.key == "model") {
                cfg.modelPath = e.value;
            } else if (e.key == "experiment") {
                cfg.experiment = parseExperimentName(e.value);
            } else if (e.key == "q0") {
                const auto v = parseRealList(e.value, e.line);
                cfg.q0 = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
            } else if (e.key == "qtilde0") {
                const auto v = parseRealList(e.value, e.line);
                cfg.qTilde0 = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
            } else if (e.key == "T") {
                cfg.T = parseRealScalar(e.value, e.line);
            } else if (e.key == "dt") {
                cfg.dt = parseRealScalar(e.value, e.line);
            } else if (e.key == "n") {
                const double n = parseRealScalar(e.value, e.line);
                if (n < 1) throw ConfigError("n must be >= 1", e.line);
                cfg.trajectories = static_cast<std::size_t>(n);
            } else if (e.key == "seed") {
                cfg.seed = static_cast<std::uint64_t>(parseRealScalar(e.value, e.line));
            } else if (e.key == "stride") {
                const double s = parseRealScalar(e.value, e.line);
                if (s < 1) throw ConfigError("stride must be >= 1", e.line);
                cfg.stride = static_cast<std::size_t>(s);
            } else if (e.key == "out") {
                cfg.outDir = e.value;
            } else if (e.key == "gamma") {
                cfg.gamma = static_cast<int>(parseRealScalar(e.value, e.line));
            } else if (e.key == "store") {
                cfg.storeCount = static_cast<std::size_t>(parseRealScalar(e.value, e.line));
            } else if (e.key == "trajectory") {
                cfg.trajectoryPath = e.value;
            } else {
                throw ConfigError("unknown [run] key '" + e.key + "'", e.line);
            }
        }
    }
    if (!sawRun) throw ConfigError("config file needs a [run] section");
    if (cfg.experiment != Experiment::Replay && cfg.modelPath.empty())
        throw ConfigError("config misses 'model'");
    // paths in the file are relative to the file itself; CLI overrides
    // arrive later and stay relative to the working directory
    if (!cfg.modelPath.empty()) cfg.modelPath = cfg.resolvePath(cfg.modelPath);
    if (!cfg.trajectoryPath.empty()) cfg.trajectoryPath = cfg.resolvePath(cfg.trajectoryPath);
    cfg.outDir = cfg.resolvePath(cfg.outDir);
    return cfg;
}

RunConfig loadRunConfig(const std::string& path) {
    return parseRunConfigText(readTextFile(path), path);
}

namespace {

// worst-case jump intensity: largest eigenvalue of C*C
double intensityBound(const GeneralModel& model) {
    double bound = 0.0;
    for (std::size_t j = model.diffusiveCount(); j < model.channelCount(); ++j) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
            model.C[j].adjoint() * model.C[j], Eigen::EigenvaluesOnly);
        bound = std::max(bound, es.eigenvalues().maxCoeff());
    }
    return bound;
}

}  // namespace

void validateConfigAgainstModel(const RunConfig& cfg, const GeneralModel& model) {
    if (cfg.q0.size() != model.dim)
        throw ConfigError("q0 has " + std::to_string(cfg.q0.size()) + " entries, model dim is " +
                          std::to_string(model.dim));
    validateSimplex(cfg.q0);
    if (cfg.qTilde0) {
        if (cfg.qTilde0->size() != model.dim)
            throw ConfigError("qtilde0 dimension does not match model");
        validateSimplex(*cfg.qTilde0);
    }
    stepCount(cfg.T, cfg.dt);
    const double bound = intensityBound(model) * cfg.dt;
    if (bound > kMaxIntensityDt)
        throw ConfigError("step-size guard violated: worst-case jump intensity * dt = " +
                          std::to_string(bound) + " exceeds " + std::to_string(kMaxIntensityDt) +
                          "; decrease dt");
}

namespace {

Json countersJson(const StepCounters& c) {
    return Json{{"state_clips", c.stateClips},
                {"population_clips", c.populationClips},
                {"jumps", c.jumps},
                {"skipped_jumps", c.skippedJumps}};
}

Json configEchoJson(const RunConfig& cfg) {
    Json echo = Json::object();
    for (const auto& [k, v] : cfg.echo) echo[k] = v;
    return echo;
}

Json baseSummary(const RunConfig& cfg, const std::string& modelHash) {
    Json j;
    j["experiment"] = experimentName(cfg.experiment);
    j["model_hash"] = modelHash;
    j["config"] = configEchoJson(cfg);
    j["T"] = cfg.T;
    j["dt"] = cfg.dt;
    j["n"] = cfg.trajectories;
    j["seed"] = cfg.seed;
    j["stride"] = cfg.stride;
    return j;
}

void writeJson(const std::string& path, const Json& j) {
    writeTextArtifact(path, j.dump(2) + "\n");
}

std::string paddedIndex(std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%06zu", i);
    return buf;
}

struct TestEntry {
    std::string name;
    bool applicable = true;
    bool pass = false;
    Json detail = Json::object();
    std::string note;
};

Json entryJson(const TestEntry& e) {
    Json j;
    j["name"] = e.name;
    j["applicable"] = e.applicable;
    if (e.applicable) j["pass"] = e.pass;
    if (!e.note.empty()) j["note"] = e.note;
    if (!e.detail.empty()) j["detail"] = e.detail;
    return j;
}

Json rateCellsJson(const std::vector<RateCell>& cells) {
    Json arr = Json::array();
    for (const auto& c : cells) {
        Json j;
        j["alpha"] = c.alpha;
        j["gamma"] = c.gamma;
        j["applicable"] = c.applicable;
        j["fits"] = c.fits;
        if (c.applicable && c.fits > 0) {
            j["fitted_slope"] = c.fitted;
            j["se"] = c.se;
            j["target_rate"] = c.target;
            j["rel_error"] = c.relError;
            j["ok"] = c.ok;
        } else if (c.applicable) {
            j["target_rate"] = c.target;
            j["ok"] = false;
        } else {
            j["note"] = std::isinf(c.target) ? "finite-time extinction regime"
                                             : "rate not identifiable for this pair";
        }
        arr.push_back(j);
    }
    return arr;
}

bool allCellsOk(const std::vector<RateCell>& cells) {
    for (const auto& c : cells)
        if (c.applicable && !c.ok) return false;
    return true;
}

int runVerifyAll(const RunConfig& cfg, const GeneralModel& general, const std::string& hash) {
    namespace fs = std::filesystem;
    const PointerBasis basis = PointerBasis::withDim(general.dim);
    std::vector<TestEntry> entries;

    const NondemolitionReport ndRep = checkNondemolition(general, basis);
    {
        TestEntry e;
        e.name = "nondemolition";
        e.pass = ndRep.ok;
        e.detail["violations"] = ndRep.violations.size();
        Json v = Json::array();
        for (std::size_t i = 0; i < std::min<std::size_t>(ndRep.violations.size(), 8); ++i) {
            const auto& viol = ndRep.violations[i];
            v.push_back(Json{{"op", viol.op}, {"row", viol.row}, {"col", viol.col}});
        }
        if (!v.empty()) e.detail["entries"] = v;
        if (!ndRep.generatorLeaks.empty())
            e.detail["generator_leaks"] = ndRep.generatorLeaks.size();
        entries.push_back(std::move(e));
    }

    auto notApplicable = [&](const std::string& name, const std::string& why) {
        TestEntry e;
        e.name = name;
        e.applicable = false;
        e.note = why;
        entries.push_back(std::move(e));
    };

    if (!ndRep.ok) {
        const std::string why = "not applicable: model is not QND in the pointer basis";
        for (const char* name : {"nd_assumption", "martingale", "born_collapse", "rate_detected",
                                 "rate_conditioned", "filter_stability", "filter_consistency",
                                 "hitting_time"})
            notApplicable(name, why);
    } else {
        const QndModel model = diagonalize(general, basis);
        const NdReport nd = checkNdAssumption(model);
        {
            TestEntry e;
            e.name = "nd_assumption";
            e.pass = nd.ok;
            Json pairs = Json::array();
            for (auto [a, b] : nd.indistinguishable) pairs.push_back(Json::array({a, b}));
            if (!pairs.empty()) e.detail["indistinguishable_pairs"] = pairs;
            entries.push_back(std::move(e));
        }

        const std::size_t steps = stepCount(cfg.T, cfg.dt);
        EnsembleOptions opts;
        opts.T = cfg.T;
        opts.dt = cfg.dt;
        opts.trajectories = cfg.trajectories;
        opts.seed = cfg.seed;
        opts.workers = cfg.workers;
        std::vector<std::size_t> cps{steps / 5, (2 * steps) / 5, steps};
        for (std::size_t k : cps) {
            if (k == 0) continue;
            const double t = static_cast<double>(k) * cfg.dt;
            if (std::find(opts.checkpoints.begin(), opts.checkpoints.end(), t) ==
                opts.checkpoints.end())
                opts.checkpoints.push_back(t);
        }
        const EnsembleSummary summary = runPopulationEnsemble(model, cfg.q0, opts);

        {
            const MartingaleResult mart = martingaleTest(summary, cfg.q0);
            TestEntry e;
            e.name = "martingale";
            e.pass = mart.pass;
            Json zs = Json::array();
            for (const auto& z : mart.entries)
                zs.push_back(Json{{"alpha", z.alpha}, {"t", z.t}, {"mean", z.mean}, {"z", z.z}});
            e.detail["z_scores"] = zs;
            entries.push_back(std::move(e));
        }

        if (!nd.ok) {
            const std::string why = "not applicable: non-degeneracy assumption fails";
            for (const char* name : {"born_collapse", "rate_detected", "rate_conditioned",
                                     "filter_stability", "filter_consistency", "hitting_time"})
                notApplicable(name, why);
        } else {
            {
                TestEntry e;
                e.name = "born_collapse";
                try {
                    const BornResult born = bornTest(summary, cfg.q0);
                    e.pass = born.chi2.pValue > kPValueFloor;
                    e.detail["chi2"] = born.chi2.statistic;
                    e.detail["dof"] = born.chi2.dof;
                    e.detail["p_value"] = born.chi2.pValue;
                    e.detail["unresolved"] = born.unresolved;
                } catch (const TooManyUnresolved& ex) {
                    e.pass = false;
                    e.note = ex.what();
                }
                entries.push_back(std::move(e));
            }
            {
                TestEntry e;
                e.name = "rate_detected";
                try {
                    const auto cells = rateReport(model, cfg.q0, summary);
                    e.pass = allCellsOk(cells);
                    e.detail["cells"] = rateCellsJson(cells);
                } catch (const EmptyCell& ex) {
                    e.pass = false;
                    e.note = ex.what();
                }
                entries.push_back(std::move(e));
            }
            {
                TestEntry e;
                e.name = "rate_conditioned";
                ConditionedRateOptions copts;
                copts.T = cfg.T;
                copts.dt = cfg.dt;
                copts.paths = kConditionedFitPaths;
                copts.seed = cfg.seed + 0x51a7e;
                copts.workers = cfg.workers;
                const auto cells = rateReportConditioned(model, cfg.q0, copts);
                e.pass = allCellsOk(cells);
                e.detail["cells"] = rateCellsJson(cells);
                entries.push_back(std::move(e));
            }
            {
                const Eigen::VectorXd qT0 =
                    cfg.qTilde0.value_or(Eigen::VectorXd::Constant(
                        model.dim(), 1.0 / static_cast<double>(model.dim())));
                const auto stability = filterStabilityExperiment(
                    model, cfg.q0, qT0, cfg.T, cfg.dt, std::min<std::size_t>(cfg.trajectories, 500),
                    cfg.seed + 0xf117e4, cfg.workers, kFilterDistanceTol);
                TestEntry e;
                e.name = "filter_stability";
                e.pass = stability.medianFinalDistance <= kFilterDistanceTol;
                e.detail["median_final_distance"] = stability.medianFinalDistance;
                e.detail["fraction_within_tol"] = stability.fractionWithinTol;
                e.detail["runs"] = stability.runs;
                entries.push_back(std::move(e));
                TestEntry c;
                c.name = "filter_consistency";
                c.pass = stability.identityBitExact;
                entries.push_back(std::move(c));
            }
            {
                bool any = false;
                for (int a = 0; a < model.dim(); ++a) {
                    if (extinctionChannels(model, a).empty()) continue;
                    any = true;
                    TestEntry e;
                    e.name = "hitting_time_alpha" + std::to_string(a);
                    const HittingTestResult hit =
                        hittingTimeTest(model, cfg.q0, summary, a, cfg.T);
                    e.pass = hit.ks.pValue > kPValueFloor && std::abs(hit.censorZ) <= 3.0;
                    e.detail["ks_statistic"] = hit.ks.statistic;
                    e.detail["ks_p_value"] = hit.ks.pValue;
                    e.detail["extinctions"] = hit.observedExtinctions;
                    e.detail["censored_fraction"] = hit.censoredFraction;
                    e.detail["expected_censored_fraction"] = hit.expectedCensoredFraction;
                    e.detail["censor_z"] = hit.censorZ;
                    entries.push_back(std::move(e));
                }
                if (!any)
                    notApplicable("hitting_time",
                                  "not applicable: no counting channel with zero intensity");
            }
        }

        Json summaryJson = baseSummary(cfg, hash);
        summaryJson["unresolved"] = summary.unresolved;
        summaryJson["repairs"] = countersJson(summary.repairs);
        writeJson((fs::path(cfg.outDir) / "summary.json").string(), summaryJson);
    }
    if (!ndRep.ok) {
        Json summaryJson = baseSummary(cfg, hash);
        summaryJson["note"] = "model is not QND in the pointer basis; see report.json";
        writeJson((fs::path(cfg.outDir) / "summary.json").string(), summaryJson);
    }

    bool allPass = true;
    Json tests = Json::array();
    for (const auto& e : entries) {
        if (e.applicable && !e.pass) allPass = false;
        tests.push_back(entryJson(e));
    }
    Json report;
    report["experiment"] = experimentName(cfg.experiment);
    report["model_hash"] = hash;
    report["config"] = configEchoJson(cfg);
    report["tests"] = tests;
    report["pass"] = allPass;
    writeJson((fs::path(cfg.outDir) / "report.json").string(), report);
    return allPass ? 0 : 4;
}

int runSimulate(const RunConfig& cfg, const GeneralModel& general, const std::string& hash) {
    namespace fs = std::filesystem;
    // diagonal models run the closed population system (replays then
    // reproduce the stored columns exactly); dense models need the full
    // density-matrix SME
    std::optional<QndModel> qnd;
    try {
        qnd = diagonalize(general, PointerBasis::withDim(general.dim));
    } catch (const DiagonalityError&) {
    }
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(general.dim, general.dim);
    for (int a = 0; a < general.dim; ++a) rho0(a, a) = cfg.q0[a];

    const std::size_t n = cfg.trajectories;
    std::vector<Eigen::VectorXd> finals(n);
    std::vector<StepCounters> repairs(n);
    const std::size_t keep = std::min(cfg.storeCount, n);

    struct Produced {
        std::vector<double> times;
        std::vector<Eigen::VectorXd> q;
        MeasurementRecord record;
        StepCounters repairs;
    };

    // batches keep memory flat while a single writer owns the files
    const std::size_t batch = std::max<std::size_t>(8, cfg.workers == 0 ? 8 : cfg.workers);
    std::vector<Produced> window(std::min(batch, n));
    for (std::size_t base = 0; base < n; base += batch) {
        const std::size_t count = std::min(batch, n - base);
        parallelFor(count, cfg.workers, [&](std::size_t off) {
            if (qnd) {
                auto traj = simulatePopulations(*qnd, cfg.q0, cfg.T, cfg.dt,
                                                cfg.seed + base + off);
                window[off] = {std::move(traj.times), std::move(traj.q),
                               std::move(traj.record), traj.repairs};
            } else {
                auto traj = simulateTrajectory(general, rho0, cfg.T, cfg.dt,
                                               cfg.seed + base + off);
                window[off] = {std::move(traj.times), std::move(traj.q),
                               std::move(traj.record), traj.repairs};
            }
        });
        for (std::size_t off = 0; off < count; ++off) {
            const std::size_t idx = base + off;
            finals[idx] = window[off].q.back();
            repairs[idx] = window[off].repairs;
            if (idx < keep) {
                const std::string stem = "trajectory_" + paddedIndex(idx);
                writeTrajectoryCsv((fs::path(cfg.outDir) / (stem + ".csv")).string(),
                                   window[off].times, window[off].q, window[off].record,
                                   cfg.stride);
                Json meta;
                meta["model_hash"] = hash;
                meta["dt"] = cfg.dt;
                meta["T"] = cfg.T;
                meta["seed"] = cfg.seed + idx;
                meta["stride"] = cfg.stride;
                meta["integrator"] = qnd ? "populations" : "density_matrix";
                meta["repairs"] = countersJson(window[off].repairs);
                writeJson((fs::path(cfg.outDir) / (stem + ".json")).string(), meta);
            }
        }
    }

    StepCounters total;
    Eigen::VectorXd meanFinal = Eigen::VectorXd::Zero(general.dim);
    std::vector<double> column(n);
    for (int a = 0; a < general.dim; ++a) {
        for (std::size_t i = 0; i < n; ++i) column[i] = finals[i][a];
        meanFinal[a] = mean(column);
    }
    for (const auto& r : repairs) total += r;

    Json summary = baseSummary(cfg, hash);
    summary["stored_trajectories"] = keep;
    summary["mean_final_q"] = std::vector<double>(meanFinal.data(), meanFinal.data() + general.dim);
    summary["repairs"] = countersJson(total);
    writeJson((fs::path(cfg.outDir) / "summary.json").string(), summary);
    return 0;
}

int runConditioned(const RunConfig& cfg, const GeneralModel& general, const std::string& hash) {
    namespace fs = std::filesystem;
    const QndModel model = diagonalize(general, PointerBasis::withDim(general.dim));
    if (cfg.gamma < 0 || cfg.gamma >= model.dim())
        throw ConfigError("conditioned experiment needs a valid 'gamma'");

    const std::size_t n = cfg.trajectories;
    const int d = model.dim();
    const double t0 = kFitBurnInFraction * cfg.T;
    const RateTable table = rateTable(model);

    std::vector<Eigen::VectorXd> slopes(n);
    const std::size_t keep = std::min(cfg.storeCount, n);
    const std::size_t batch = std::max<std::size_t>(8, cfg.workers == 0 ? 8 : cfg.workers);
    std::vector<ConditionedRun> window(std::min(batch, n));
    for (std::size_t base = 0; base < n; base += batch) {
        const std::size_t count = std::min(batch, n - base);
        parallelFor(count, cfg.workers, [&](std::size_t off) {
            window[off] = simulateConditioned(model, cfg.gamma, cfg.q0, cfg.T, cfg.dt,
                                              cfg.seed + base + off);
        });
        for (std::size_t off = 0; off < count; ++off) {
            const std::size_t idx = base + off;
            Eigen::VectorXd s = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
            for (int a = 0; a < d; ++a) {
                if (a == cfg.gamma) continue;
                try {
                    s[a] = logRatioSlope(window[off].logq, a, cfg.gamma, t0, cfg.T);
                } catch (const InsufficientWindow&) {
                }
            }
            slopes[idx] = std::move(s);
            if (idx < keep)
                writeConditionedCsv((fs::path(cfg.outDir) /
                                     ("conditioned_" + paddedIndex(idx) + ".csv"))
                                        .string(),
                                    window[off].logq, cfg.stride);
        }
    }

    Json slopeArr = Json::array();
    for (int a = 0; a < d; ++a) {
        if (a == cfg.gamma) continue;
        std::vector<double> fits;
        for (const auto& s : slopes)
            if (std::isfinite(s[a])) fits.push_back(s[a]);
        Json j;
        j["alpha"] = a;
        j["gamma"] = cfg.gamma;
        j["fits"] = fits.size();
        const double target = table.Lambda(a, cfg.gamma);
        j["target_rate"] = std::isfinite(target) ? Json(target) : Json("inf");
        if (!fits.empty()) {
            const double fitted = mean(fits);
            j["fitted_slope"] = fitted;
            if (std::isfinite(target) && target > 0.0)
                j["rel_error"] = std::abs(-fitted - target) / target;
        }
        slopeArr.push_back(j);
    }

    Json summary = baseSummary(cfg, hash);
    summary["gamma"] = cfg.gamma;
    summary["stored_trajectories"] = keep;
    summary["slopes"] = slopeArr;
    writeJson((fs::path(cfg.outDir) / "summary.json").string(), summary);
    return 0;
}

int runFilterExperiment(const RunConfig& cfg, const GeneralModel& general,
                        const std::string& hash) {
    namespace fs = std::filesystem;
    const QndModel model = diagonalize(general, PointerBasis::withDim(general.dim));
    const int d = model.dim();
    const Eigen::VectorXd qT0 = cfg.qTilde0.value_or(
        Eigen::VectorXd::Constant(d, 1.0 / static_cast<double>(d)));

    const std::size_t n = cfg.trajectories;
    std::vector<double> finalDistance(n);
    std::vector<Eigen::VectorXd> slopes(n);
    std::size_t warnings = 0;
    const std::size_t keep = std::min(cfg.storeCount, n);
    const std::size_t batch = std::max<std::size_t>(8, cfg.workers == 0 ? 8 : cfg.workers);
    std::vector<FilterRun> window(std::min(batch, n));
    for (std::size_t base = 0; base < n; base += batch) {
        const std::size_t count = std::min(batch, n - base);
        parallelFor(count, cfg.workers, [&](std::size_t off) {
            const QTrajectory truth =
                simulatePopulations(model, cfg.q0, cfg.T, cfg.dt, cfg.seed + base + off);
            window[off] = runFilter(model, truth, qT0);
        });
        for (std::size_t off = 0; off < count; ++off) {
            const std::size_t idx = base + off;
            finalDistance[idx] = window[off].traceDistance.back();
            if (!window[off].supportWarning.empty()) ++warnings;
            Eigen::VectorXd s =
                Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
            for (int a = 0; a < d; ++a) {
                try {
                    s[a] = filterLogRatioSlope(window[off], a);
                } catch (const InsufficientWindow&) {
                }
            }
            slopes[idx] = std::move(s);
            if (idx < keep)
                writeFilterCsv(
                    (fs::path(cfg.outDir) / ("filter_" + paddedIndex(idx) + ".csv")).string(),
                    window[off], cfg.stride);
        }
    }

    std::vector<double> sorted = finalDistance;
    std::sort(sorted.begin(), sorted.end());
    const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    Json slopeArr = Json::array();
    for (int a = 0; a < d; ++a) {
        std::vector<double> fits;
        for (const auto& s : slopes)
            if (std::isfinite(s[a])) fits.push_back(s[a]);
        if (fits.empty()) continue;
        slopeArr.push_back(Json{{"alpha", a}, {"fits", fits.size()}, {"mean_slope", mean(fits)}});
    }

    Json summary = baseSummary(cfg, hash);
    summary["qtilde0"] = std::vector<double>(qT0.data(), qT0.data() + d);
    summary["median_final_distance"] = median;
    summary["support_warnings"] = warnings;
    summary["slopes"] = slopeArr;
    summary["stored_trajectories"] = keep;
    writeJson((fs::path(cfg.outDir) / "summary.json").string(), summary);
    return 0;
}

int runHitting(const RunConfig& cfg, const GeneralModel& general, const std::string& hash) {
    namespace fs = std::filesystem;
    const QndModel model = diagonalize(general, PointerBasis::withDim(general.dim));
    EnsembleOptions opts;
    opts.T = cfg.T;
    opts.dt = cfg.dt;
    opts.trajectories = cfg.trajectories;
    opts.seed = cfg.seed;
    opts.workers = cfg.workers;
    opts.fitSlopes = false;
    const EnsembleSummary summary = runPopulationEnsemble(model, cfg.q0, opts);

    bool any = false;
    bool allPass = true;
    Json tests = Json::array();
    for (int a = 0; a < model.dim(); ++a) {
        if (extinctionChannels(model, a).empty()) continue;
        any = true;
        const HittingTestResult hit = hittingTimeTest(model, cfg.q0, summary, a, cfg.T);
        const bool pass = hit.ks.pValue > kPValueFloor && std::abs(hit.censorZ) <= 3.0;
        if (!pass) allPass = false;
        Json j;
        j["name"] = "hitting_time_alpha" + std::to_string(a);
        j["pass"] = pass;
        j["ks_statistic"] = hit.ks.statistic;
        j["ks_p_value"] = hit.ks.pValue;
        j["extinctions"] = hit.observedExtinctions;
        j["censored_fraction"] = hit.censoredFraction;
        j["expected_censored_fraction"] = hit.expectedCensoredFraction;
        j["censor_z"] = hit.censorZ;
        tests.push_back(j);
    }
    if (!any)
        throw NoExtinctionChannels("hitting experiment needs a counting channel with zero intensity");

    Json report;
    report["experiment"] = experimentName(cfg.experiment);
    report["model_hash"] = hash;
    report["config"] = configEchoJson(cfg);
    report["tests"] = tests;
    report["pass"] = allPass;
    writeJson((fs::path(cfg.outDir) / "report.json").string(), report);

    Json summaryJson = baseSummary(cfg, hash);
    summaryJson["repairs"] = countersJson(summary.repairs);
    writeJson((fs::path(cfg.outDir) / "summary.json").string(), summaryJson);
    return allPass ? 0 : 4;
}

}  // namespace

int replay(const std::string& trajectoryPath, const std::string& modelPath,
           const Eigen::VectorXd& qTilde0, const std::string& outDir) {
    namespace fs = std::filesystem;
    fs::create_directories(outDir);
    const std::string modelText = readTextFile(modelPath);
    const GeneralModel general = parseModelText(modelText);
    const QndModel model = diagonalize(general, PointerBasis::withDim(general.dim));
    const StoredTrajectory stored = readTrajectoryCsv(trajectoryPath);
    if (stored.q.front().size() != model.dim())
        throw SchemaError("stored trajectory dimension does not match model");

    FilterRun run;
    run.q0 = stored.q.front();
    run.qTilde0 = qTilde0;
    run.record = stored.record;
    run.dt = stored.dt;
    run.times = stored.times;
    run.qTilde = filterPopulations(model, stored.record, qTilde0, stored.dt, &run.repairs);
    run.traceDistance.reserve(run.qTilde.size());
    for (std::size_t k = 0; k < run.qTilde.size(); ++k)
        run.traceDistance.push_back(0.5 * (stored.q[k] - run.qTilde[k]).cwiseAbs().sum());

    writeFilterCsv((fs::path(outDir) / "filter_replay.csv").string(), run, 1);
    Json summary;
    summary["experiment"] = "replay";
    summary["model_hash"] = contentHashHex(modelText);
    summary["trajectory"] = trajectoryPath;
    summary["dt"] = stored.dt;
    summary["steps"] = stored.record.steps;
    summary["qtilde0"] = std::vector<double>(qTilde0.data(), qTilde0.data() + qTilde0.size());
    summary["final_trace_distance"] = run.traceDistance.back();
    summary["repairs"] = countersJson(run.repairs);
    writeJson((fs::path(outDir) / "summary.json").string(), summary);
    return 0;
}

int runExperiment(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.outDir);

    if (cfg.experiment == Experiment::Replay) {
        if (cfg.trajectoryPath.empty())
            throw ConfigError("replay needs 'trajectory' pointing at a stored CSV");
        if (cfg.modelPath.empty()) throw ConfigError("replay needs 'model'");
        Eigen::VectorXd qT0;
        if (cfg.qTilde0) {
            qT0 = *cfg.qTilde0;
        } else if (cfg.q0.size() > 0) {
            qT0 = cfg.q0;
        } else {
            throw ConfigError("replay needs 'qtilde0' (or 'q0') for the filter start");
        }
        return replay(cfg.trajectoryPath, cfg.modelPath, qT0, cfg.outDir);
    }

    const std::string modelText = readTextFile(cfg.modelPath);
    const GeneralModel general = parseModelText(modelText);
    const std::string hash = contentHashHex(modelText);
    validateConfigAgainstModel(cfg, general);

    switch (cfg.experiment) {
        case Experiment::Simulate: return runSimulate(cfg, general, hash);
        case Experiment::Conditioned: return runConditioned(cfg, general, hash);
        case Experiment::Filter: return runFilterExperiment(cfg, general, hash);
        case Experiment::Hitting: return runHitting(cfg, general, hash);
        case Experiment::VerifyAll: return runVerifyAll(cfg, general, hash);
        case Experiment::Replay: break;  // handled above
    }
    throw ConfigError("unhandled experiment");
}

}  // namespace qnd

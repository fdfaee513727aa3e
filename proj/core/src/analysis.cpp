#include "qnd/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace qnd {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

CollapseOutcome detectCollapse(const Eigen::VectorXd& qFinal, double threshold) {
    int best = 0;
    const double top = qFinal.maxCoeff(&best);
    if (top >= threshold) return {true, best};
    return {false, -1};
}

void parallelFor(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex errorMutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(errorMutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

namespace {

struct TrajectorySlots {
    std::vector<CollapseOutcome> outcome;
    std::vector<Eigen::MatrixXd> checkpointQ;     // (checkpoint, alpha)
    std::vector<Eigen::VectorXd> slopes;          // vs detected pointer; NaN when unusable
    std::vector<Eigen::VectorXd> extinction;      // per alpha; +inf when censored / n.a.
    std::vector<StepCounters> repairs;
};

Eigen::VectorXd fitSlopesAgainst(const QTrajectory& traj, int gamma, double t0) {
    const int d = traj.q.front().size();
    Eigen::VectorXd slopes = Eigen::VectorXd::Constant(d, kNan);
    std::vector<double> ts;
    std::vector<std::vector<double>> ys(d);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] < t0) continue;
        if (!(traj.q[k][gamma] > 0.0)) continue;
        ts.push_back(traj.times[k]);
        for (int a = 0; a < d; ++a)
            ys[a].push_back(traj.q[k][a] > 0.0
                                ? std::log(traj.q[k][a]) - std::log(traj.q[k][gamma])
                                : kNan);
    }
    for (int a = 0; a < d; ++a) {
        if (a == gamma) continue;
        std::vector<double> tClean, yClean;
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (std::isfinite(ys[a][i])) {
                tClean.push_back(ts[i]);
                yClean.push_back(ys[a][i]);
            }
        if (tClean.size() >= 10) slopes[a] = olsFit(tClean, yClean).slope;
    }
    return slopes;
}

}  // namespace

EnsembleSummary runPopulationEnsemble(const QndModel& model, const Eigen::VectorXd& q0,
                                      const EnsembleOptions& opts) {
    const int d = model.dim();
    const std::size_t n = opts.trajectories;
    if (n == 0) throw ConfigError("ensemble needs at least one trajectory");
    const std::size_t steps = stepCount(opts.T, opts.dt);

    std::vector<double> checkpoints = opts.checkpoints;
    if (checkpoints.empty()) checkpoints = {opts.T};
    std::vector<std::size_t> checkpointIdx;
    for (double t : checkpoints) {
        const auto k = static_cast<std::size_t>(std::llround(t / opts.dt));
        if (k > steps || std::abs(t - static_cast<double>(k) * opts.dt) > 1e-9)
            throw ConfigError("checkpoint is not on the time grid");
        checkpointIdx.push_back(k);
    }

    const bool extinctions =
        opts.trackExtinctions && [&] {
            for (int a = 0; a < d; ++a)
                if (!extinctionChannels(model, a).empty()) return true;
            return false;
        }();

    TrajectorySlots slots;
    slots.outcome.resize(n);
    slots.checkpointQ.resize(n);
    slots.slopes.resize(n);
    slots.extinction.resize(n);
    slots.repairs.resize(n);

    const double t0 = opts.burnInFraction * opts.T;
    parallelFor(n, opts.workers, [&](std::size_t idx) {
        const QTrajectory traj =
            simulatePopulations(model, q0, opts.T, opts.dt, opts.seed + idx);
        Eigen::MatrixXd cq(checkpointIdx.size(), d);
        for (std::size_t c = 0; c < checkpointIdx.size(); ++c)
            cq.row(c) = traj.q[checkpointIdx[c]].transpose();
        slots.checkpointQ[idx] = std::move(cq);
        const CollapseOutcome oc = detectCollapse(traj.q.back(), opts.collapseThreshold);
        slots.outcome[idx] = oc;
        slots.slopes[idx] = opts.fitSlopes && oc.resolved
                                ? fitSlopesAgainst(traj, oc.pointer, t0)
                                : Eigen::VectorXd::Constant(d, kNan);
        Eigen::VectorXd ext = Eigen::VectorXd::Constant(d, kNan);
        if (extinctions) {
            for (int a = 0; a < d; ++a) {
                const auto channels = extinctionChannels(model, a);
                if (channels.empty()) continue;
                double first = std::numeric_limits<double>::infinity();
                for (std::size_t j : channels) {
                    const auto& jumps = traj.record.jumpSteps[j];
                    if (!jumps.empty())
                        first = std::min(first, static_cast<double>(jumps.front() + 1) * opts.dt);
                }
                ext[a] = first;
            }
        }
        slots.extinction[idx] = std::move(ext);
        slots.repairs[idx] = traj.repairs;
    });

    EnsembleSummary out;
    out.trajectories = n;
    out.checkpoints = checkpoints;
    out.collapseFrequency = Eigen::VectorXd::Zero(d);
    out.checkpointMean.resize(checkpoints.size(), d);
    out.checkpointSe.resize(checkpoints.size(), d);
    out.slopeMean = Eigen::MatrixXd::Constant(d, d, kNan);
    out.slopeSe = Eigen::MatrixXd::Constant(d, d, kNan);
    out.slopeCount = Eigen::MatrixXi::Zero(d, d);
    out.extinctionTimes.resize(d);
    out.extinctionCensored.assign(d, 0);
    out.outcomes = slots.outcome;

    for (std::size_t idx = 0; idx < n; ++idx) {
        out.repairs += slots.repairs[idx];
        if (slots.outcome[idx].resolved)
            out.collapseFrequency[slots.outcome[idx].pointer] += 1.0;
        else
            ++out.unresolved;
    }
    out.collapseFrequency /= static_cast<double>(n);

    std::vector<double> column(n);
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        for (int a = 0; a < d; ++a) {
            for (std::size_t idx = 0; idx < n; ++idx) column[idx] = slots.checkpointQ[idx](c, a);
            out.checkpointMean(c, a) = mean(column);
            out.checkpointSe(c, a) = sampleStdDev(column) / std::sqrt(static_cast<double>(n));
        }
    }

    for (int g = 0; g < d; ++g) {
        for (int a = 0; a < d; ++a) {
            if (a == g) continue;
            std::vector<double> fits;
            for (std::size_t idx = 0; idx < n; ++idx)
                if (slots.outcome[idx].resolved && slots.outcome[idx].pointer == g &&
                    std::isfinite(slots.slopes[idx][a]))
                    fits.push_back(slots.slopes[idx][a]);
            out.slopeCount(a, g) = static_cast<int>(fits.size());
            if (!fits.empty()) {
                out.slopeMean(a, g) = mean(fits);
                out.slopeSe(a, g) =
                    sampleStdDev(fits) / std::sqrt(static_cast<double>(fits.size()));
            }
        }
    }

    for (int a = 0; a < d; ++a) {
        if (extinctionChannels(model, a).empty()) continue;
        for (std::size_t idx = 0; idx < n; ++idx) {
            const double t = slots.extinction[idx][a];
            if (std::isfinite(t))
                out.extinctionTimes[a].push_back(t);
            else
                ++out.extinctionCensored[a];
        }
    }

    if (opts.keepPerTrajectory) out.perTrajectoryCheckpoints = std::move(slots.checkpointQ);
    return out;
}

MartingaleResult martingaleTest(const EnsembleSummary& summary, const Eigen::VectorXd& q0) {
    if (summary.trajectories < 100)
        throw ConfigError("martingale test needs at least 100 trajectories");
    MartingaleResult res;
    res.pass = true;
    for (std::size_t c = 0; c < summary.checkpoints.size(); ++c) {
        for (int a = 0; a < q0.size(); ++a) {
            ZScoreEntry e;
            e.alpha = a;
            e.t = summary.checkpoints[c];
            e.mean = summary.checkpointMean(c, a);
            e.se = summary.checkpointSe(c, a);
            const double dev = e.mean - q0[a];
            if (e.se > 0.0)
                e.z = dev / e.se;
            else
                e.z = dev == 0.0 ? 0.0
                                 : std::copysign(std::numeric_limits<double>::infinity(), dev);
            if (!(std::abs(e.z) <= 3.0)) res.pass = false;
            res.entries.push_back(e);
        }
    }
    return res;
}

BornResult bornTest(const EnsembleSummary& summary, const Eigen::VectorXd& q0) {
    BornResult res;
    res.unresolved = summary.unresolved;
    const double n = static_cast<double>(summary.trajectories);
    if (static_cast<double>(summary.unresolved) >= 0.01 * n && summary.unresolved > 0)
        throw TooManyUnresolved(std::to_string(summary.unresolved) + " of " +
                                std::to_string(summary.trajectories) +
                                " trajectories did not resolve");
    const double resolved = n - static_cast<double>(summary.unresolved);
    for (int a = 0; a < q0.size(); ++a) {
        res.observed.push_back(summary.collapseFrequency[a] * n);
        res.expected.push_back(resolved * q0[a]);
    }
    res.chi2 = pearsonChiSquare(res.observed, res.expected);
    return res;
}

HittingTestResult hittingTimeTest(const QndModel& model, const Eigen::VectorXd& q0,
                                  const EnsembleSummary& summary, int alpha, double horizon) {
    if (extinctionChannels(model, alpha).empty())
        throw NoExtinctionChannels("no counting channel extinguishes pointer " +
                                   std::to_string(alpha));
    HittingTestResult res;
    const auto& times = summary.extinctionTimes.at(alpha);
    res.observedExtinctions = times.size();
    res.censored = summary.extinctionCensored.at(alpha);
    const std::size_t total = times.size() + res.censored;
    if (total == 0) throw NoExtinctionChannels("ensemble carries no extinction statistics");
    res.ks = ksOneSampleCensored(
        times, total, [&](double t) { return hittingTimeCdf(model, q0, alpha, t); }, horizon);
    res.censoredFraction = static_cast<double>(res.censored) / static_cast<double>(total);
    res.expectedCensoredFraction = 1.0 - hittingTimeCdf(model, q0, alpha, horizon);
    const double p = res.expectedCensoredFraction;
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-300) / static_cast<double>(total));
    res.censorZ = (res.censoredFraction - p) / se;
    return res;
}

namespace {

RateCell makeCell(int a, int g, double target) {
    RateCell cell;
    cell.alpha = a;
    cell.gamma = g;
    cell.target = target;
    cell.relError = kNan;
    cell.applicable = std::isfinite(target) && target > 0.0;
    return cell;
}

}  // namespace

std::vector<RateCell> rateReport(const QndModel& model, const Eigen::VectorXd& q0,
                                 const EnsembleSummary& summary, double relTol) {
    const RateTable table = rateTable(model);
    const int d = model.dim();
    std::vector<RateCell> cells;
    for (int g = 0; g < d; ++g) {
        if (!(q0[g] > 0.0)) continue;
        const int inCell = [&] {
            int c = 0;
            for (const auto& oc : summary.outcomes)
                if (oc.resolved && oc.pointer == g) ++c;
            return c;
        }();
        if (inCell == 0) {
            if (summary.trajectories >= 500)
                throw EmptyCell("no trajectory collapsed to pointer " + std::to_string(g) +
                                " despite q0 > 0 and N >= 500");
            continue;
        }
        for (int a = 0; a < d; ++a) {
            if (a == g) continue;
            RateCell cell = makeCell(a, g, table.Lambda(a, g));
            cell.fits = static_cast<std::size_t>(summary.slopeCount(a, g));
            if (cell.applicable && cell.fits > 0) {
                cell.fitted = summary.slopeMean(a, g);
                cell.se = summary.slopeSe(a, g);
                cell.relError = std::abs(-cell.fitted - cell.target) / cell.target;
                cell.ok = cell.relError <= relTol;
            } else if (!cell.applicable) {
                cell.ok = true;  // nothing to check: rate 0 or infinite
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

std::vector<RateCell> rateReportConditioned(const QndModel& model, const Eigen::VectorXd& q0,
                                            const ConditionedRateOptions& opts) {
    const RateTable table = rateTable(model);
    const int d = model.dim();
    std::vector<RateCell> cells;
    const double t0 = opts.burnInFraction * opts.T;
    for (int g = 0; g < d; ++g) {
        if (!(q0[g] > 0.0)) continue;
        if (table.degenerateConditioning[g]) {
            for (int a = 0; a < d; ++a) {
                if (a == g) continue;
                RateCell cell = makeCell(a, g, table.Lambda(a, g));
                cell.applicable = false;
                cell.ok = true;
                cells.push_back(cell);
            }
            continue;
        }
        // slope fits per path, slot order fixed by path index
        std::vector<Eigen::VectorXd> slopes(opts.paths);
        parallelFor(opts.paths, opts.workers, [&](std::size_t idx) {
            const ConditionedRun run = simulateConditioned(
                model, g, q0, opts.T, opts.dt,
                opts.seed + static_cast<std::uint64_t>(g) * opts.paths + idx);
            Eigen::VectorXd s = Eigen::VectorXd::Constant(d, kNan);
            for (int a = 0; a < d; ++a) {
                if (a == g) continue;
                try {
                    s[a] = logRatioSlope(run.logq, a, g, t0, opts.T);
                } catch (const InsufficientWindow&) {
                }
            }
            slopes[idx] = std::move(s);
        });
        for (int a = 0; a < d; ++a) {
            if (a == g) continue;
            RateCell cell = makeCell(a, g, table.Lambda(a, g));
            std::vector<double> fits;
            for (const auto& s : slopes)
                if (std::isfinite(s[a])) fits.push_back(s[a]);
            cell.fits = fits.size();
            if (cell.applicable && !fits.empty()) {
                cell.fitted = mean(fits);
                cell.se = sampleStdDev(fits) / std::sqrt(static_cast<double>(fits.size()));
                cell.relError = std::abs(-cell.fitted - cell.target) / cell.target;
                cell.ok = cell.relError <= opts.relTol;
            } else if (!cell.applicable) {
                cell.ok = true;
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

FilterStabilityResult filterStabilityExperiment(const QndModel& model,
                                                const Eigen::VectorXd& q0,
                                                const Eigen::VectorXd& qTilde0, double T,
                                                double dt, std::size_t runs,
                                                std::uint64_t seed, unsigned workers,
                                                double distanceTol) {
    FilterStabilityResult res;
    res.runs = runs;
    std::vector<double> finalDistance(runs, 0.0);
    std::vector<unsigned char> identityOk(runs, 1);
    std::vector<unsigned char> warned(runs, 0);
    const std::size_t identityChecks = std::min<std::size_t>(runs, 8);

    parallelFor(runs, workers, [&](std::size_t idx) {
        const QTrajectory truth = simulatePopulations(model, q0, T, dt, seed + idx);
        const FilterRun run = runFilter(model, truth, qTilde0);
        finalDistance[idx] = run.traceDistance.back();
        warned[idx] = run.supportWarning.empty() ? 0 : 1;
        if (idx < identityChecks) {
            StepCounters scratch;
            const auto mirror = filterPopulations(model, truth.record, q0, dt, &scratch);
            for (std::size_t k = 0; k < mirror.size(); ++k)
                if (!(mirror[k].array() == truth.q[k].array()).all()) {
                    identityOk[idx] = 0;
                    break;
                }
        }
    });

    std::vector<double> sorted = finalDistance;
    std::sort(sorted.begin(), sorted.end());
    res.medianFinalDistance = runs % 2 == 1
                                  ? sorted[runs / 2]
                                  : 0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2]);
    std::size_t within = 0;
    for (double v : finalDistance)
        if (v <= distanceTol) ++within;
    res.fractionWithinTol = static_cast<double>(within) / static_cast<double>(runs);
    res.identityBitExact = true;
    for (std::size_t idx = 0; idx < identityChecks; ++idx)
        if (!identityOk[idx]) res.identityBitExact = false;
    for (auto w : warned) res.supportWarnings += w;
    return res;
}

}  // namespace qnd

#include "qnd/filter.hpp"

#include <cmath>
#include <limits>

#include "qnd/stats.hpp"

namespace qnd {

std::vector<Eigen::VectorXd> filterPopulations(const QndModel& model,
                                               const MeasurementRecord& record,
                                               const Eigen::VectorXd& qTilde0, double dt,
                                               StepCounters* counters) {
    validateSimplex(qTilde0);
    if (qTilde0.size() != model.dim()) throw ConfigError("qTilde0 dimension does not match model");
    if (std::abs(record.dt - dt) > 1e-12 * std::max(1.0, std::abs(dt)))
        throw GridMismatch("record grid spacing does not match dt");
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    if (record.y.size() != p || record.jumpSteps.size() != m)
        throw GridMismatch("record channel layout does not match model");
    for (const auto& yi : record.y)
        if (yi.size() != record.steps + 1) throw GridMismatch("record output length mismatch");

    StepCounters local;
    StepCounters& ctr = counters ? *counters : local;

    std::vector<Eigen::VectorXd> series;
    series.reserve(record.steps + 1);
    Eigen::VectorXd q = qTilde0;
    series.push_back(q);

    std::vector<double> dy(p);
    std::vector<int> jumpCounts(m, 0);
    std::vector<std::size_t> jumpIdx(m, 0);

    for (std::size_t k = 0; k < record.steps; ++k) {
        for (std::size_t i = 0; i < p; ++i) dy[i] = record.y[i][k + 1] - record.y[i][k];
        for (std::size_t j = 0; j < m; ++j) {
            int hits = 0;
            const auto& jumps = record.jumpSteps[j];
            while (jumpIdx[j] < jumps.size() && jumps[jumpIdx[j]] == k) {
                ++hits;
                ++jumpIdx[j];
            }
            jumpCounts[j] = hits;
        }
        populationStep(model, q, dy, jumpCounts, record.dt, ctr);
        series.push_back(q);
    }
    return series;
}

std::vector<double> FilterRun::logRatio(int alpha, int gamma) const {
    std::vector<double> out;
    out.reserve(qTilde.size());
    for (const auto& q : qTilde)
        out.push_back(q[alpha] > 0.0 && q[gamma] > 0.0
                          ? std::log(q[alpha]) - std::log(q[gamma])
                          : std::numeric_limits<double>::quiet_NaN());
    return out;
}

FilterRun runFilter(const QndModel& model, const QTrajectory& truth,
                    const Eigen::VectorXd& qTilde0) {
    FilterRun run;
    run.q0 = truth.q.front();
    run.qTilde0 = qTilde0;
    run.record = truth.record;
    run.dt = truth.dt;
    run.times = truth.times;
    for (int a = 0; a < model.dim(); ++a)
        if (qTilde0[a] == 0.0 && run.q0[a] > 0.0) {
            run.supportWarning = "estimate assigns zero mass to pointer " + std::to_string(a) +
                                 " which the truth populates; stability is not guaranteed";
            break;
        }
    run.qTilde = filterPopulations(model, truth.record, qTilde0, truth.dt, &run.repairs);
    run.traceDistance.reserve(run.qTilde.size());
    for (std::size_t k = 0; k < run.qTilde.size(); ++k)
        run.traceDistance.push_back(0.5 * (truth.q[k] - run.qTilde[k]).cwiseAbs().sum());
    return run;
}

double filterLogRatioSlope(const FilterRun& run, int alpha, double burnInFraction,
                           double collapseThreshold) {
    if (run.qTilde.empty()) throw InsufficientWindow("empty filter run");
    int upsilon = 0;
    run.qTilde.back().maxCoeff(&upsilon);
    if (run.qTilde.back()[upsilon] < collapseThreshold)
        throw InsufficientWindow("filter has not resolved a pointer at the horizon");

    const double horizon = run.times.back();
    const double t0 = burnInFraction * horizon;
    std::vector<double> ts, ys;
    for (std::size_t k = 0; k < run.times.size(); ++k) {
        if (run.times[k] < t0) continue;
        const double qa = run.qTilde[k][alpha];
        const double qu = run.qTilde[k][upsilon];
        if (!(qa > 0.0) || !(qu > 0.0)) continue;
        ts.push_back(run.times[k]);
        ys.push_back(std::log(qa) - std::log(qu));
    }
    if (ts.size() < 10)
        throw InsufficientWindow("slope fit window holds " + std::to_string(ts.size()) +
                                 " usable points, need 10");
    return olsFit(ts, ys).slope;
}

}  // namespace qnd

#include "qnd/conditioned.hpp"

#include <cmath>
#include <limits>

#include "qnd/rng.hpp"
#include "qnd/stats.hpp"

namespace qnd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void normalizeLog(Eigen::VectorXd& score) {
    const double lse = logSumExp({score.data(), static_cast<std::size_t>(score.size())});
    score.array() -= lse;
}

}  // namespace

ConditionedRun simulateConditioned(const QndModel& model, int gamma,
                                   const Eigen::VectorXd& q0, double T, double dt,
                                   std::uint64_t seed) {
    validateSimplex(q0);
    if (q0.size() != model.dim()) throw ConfigError("q0 dimension does not match model");
    if (gamma < 0 || gamma >= model.dim()) throw ConfigError("conditioning pointer out of range");
    if (!(q0[gamma] > 0.0))
        throw DegenerateConditioning("conditioning on a pointer with zero initial population");
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    for (std::size_t j = 0; j < m; ++j)
        if (model.channels[p + j].theta[gamma] <= kIntensityEps)
            throw DegenerateConditioning("counting channel " + std::to_string(p + j) +
                                         " has zero intensity at the conditioning pointer");
    const std::size_t steps = stepCount(T, dt);
    const double sqrtDt = std::sqrt(dt);
    const int d = model.dim();

    ChannelStreams streams(seed, 0, model.channels.size());

    ConditionedRun run;
    run.noise.gamma = gamma;
    run.noise.dt = dt;
    run.noise.steps = steps;
    run.noise.brownian.assign(p, std::vector<double>(steps + 1, 0.0));
    run.noise.jumpTimes.assign(m, {});
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < steps; ++k)
            run.noise.brownian[i][k + 1] =
                run.noise.brownian[i][k] + streams[i].gaussian() * sqrtDt;
    for (std::size_t j = 0; j < m; ++j) {
        const double rate = model.channels[p + j].theta[gamma];
        double t = streams[p + j].exponential(rate);
        while (t <= T) {
            run.noise.jumpTimes[j].push_back(t);
            t += streams[p + j].exponential(rate);
        }
    }

    // exact ratio representation relative to the anchor gamma
    Eigen::VectorXd logq0(d);
    for (int a = 0; a < d; ++a) logq0[a] = q0[a] > 0.0 ? std::log(q0[a]) : kNegInf;

    run.logq.dt = dt;
    run.logq.times.reserve(steps + 1);
    run.logq.logq.reserve(steps + 1);

    std::vector<std::size_t> jumpIdx(m, 0);
    Eigen::VectorXd score(d);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        for (std::size_t j = 0; j < m; ++j) {
            const auto& times = run.noise.jumpTimes[j];
            while (jumpIdx[j] < times.size() && times[jumpIdx[j]] <= t) ++jumpIdx[j];
        }
        for (int a = 0; a < d; ++a) {
            double s = logq0[a];
            for (std::size_t i = 0; i < p; ++i) {
                const double dr = model.channels[i].r[a] - model.channels[i].r[gamma];
                s += dr * run.noise.brownian[i][k] - 0.5 * dr * dr * t;
            }
            for (std::size_t j = 0; j < m; ++j) {
                const double ta = model.channels[p + j].theta[a];
                const double tg = model.channels[p + j].theta[gamma];
                const auto n = static_cast<double>(jumpIdx[j]);
                if (ta == 0.0) {
                    if (n > 0.0) {
                        s = kNegInf;
                        break;
                    }
                    s += tg * t;
                } else {
                    s += n * std::log(ta / tg) - (ta - tg) * t;
                }
            }
            score[a] = s;
        }
        normalizeLog(score);
        run.logq.times.push_back(t);
        run.logq.logq.push_back(score);
    }
    return run;
}

LogPopulations doleansLogPopulations(const QndModel& model, const Eigen::VectorXd& q0,
                                     const NoisePaths& noise) {
    validateSimplex(q0);
    if (q0.size() != model.dim()) throw ConfigError("q0 dimension does not match model");
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    if (noise.dW.size() != p || noise.jumpSteps.size() != m)
        throw GridMismatch("noise paths do not match model channels");
    for (const auto& w : noise.dW)
        if (w.size() != noise.steps) throw GridMismatch("noise path length mismatch");
    const int d = model.dim();

    LogPopulations out;
    out.dt = noise.dt;
    out.times.reserve(noise.steps + 1);
    out.logq.reserve(noise.steps + 1);

    Eigen::VectorXd logq(d);
    for (int a = 0; a < d; ++a) logq[a] = q0[a] > 0.0 ? std::log(q0[a]) : kNegInf;
    normalizeLog(logq);
    out.times.push_back(0.0);
    out.logq.push_back(logq);

    Eigen::VectorXd q(d);
    std::vector<double> rbar, thbar;
    std::vector<std::size_t> jumpIdx(m, 0);

    for (std::size_t k = 0; k < noise.steps; ++k) {
        for (int a = 0; a < d; ++a) q[a] = std::isfinite(logq[a]) ? std::exp(logq[a]) : 0.0;
        channelMeans(model, q, rbar, thbar);

        for (int a = 0; a < d; ++a) {
            if (!std::isfinite(logq[a])) continue;  // vanished for good
            double inc = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
                const double dr = model.channels[i].r[a] - rbar[i];
                inc += dr * noise.dW[i][k] - 0.5 * dr * dr * noise.dt;
            }
            for (std::size_t j = 0; j < m; ++j) {
                const auto& steps = noise.jumpSteps[j];
                int hits = 0;
                for (std::size_t idx = jumpIdx[j]; idx < steps.size() && steps[idx] == k; ++idx)
                    ++hits;
                const double ta = model.channels[p + j].theta[a];
                if (hits > 0) {
                    if (ta == 0.0) {
                        inc = kNegInf;
                        break;
                    }
                    if (thbar[j] <= kIntensityEps)
                        throw DegenerateFilter(
                            "jump arrived on a channel with vanishing predicted intensity");
                    inc += hits * std::log(ta / thbar[j]);
                }
                inc -= (ta - thbar[j]) * noise.dt;
            }
            logq[a] = std::isfinite(inc) ? logq[a] + inc : kNegInf;
        }
        for (std::size_t j = 0; j < m; ++j) {
            const auto& steps = noise.jumpSteps[j];
            while (jumpIdx[j] < steps.size() && steps[jumpIdx[j]] == k) ++jumpIdx[j];
        }
        normalizeLog(logq);
        out.times.push_back(static_cast<double>(k + 1) * noise.dt);
        out.logq.push_back(logq);
    }
    return out;
}

double logRatioSlope(const LogPopulations& logq, int alpha, int gamma, double t0, double t1) {
    std::vector<double> ts, ys;
    for (std::size_t k = 0; k < logq.times.size(); ++k) {
        const double t = logq.times[k];
        if (t < t0 || t > t1) continue;
        const double la = logq.logq[k][alpha];
        const double lg = logq.logq[k][gamma];
        if (!std::isfinite(la) || !std::isfinite(lg)) continue;
        ts.push_back(t);
        ys.push_back(la - lg);
    }
    if (ts.size() < 10)
        throw InsufficientWindow("slope fit window holds " + std::to_string(ts.size()) +
                                 " usable points, need 10");
    return olsFit(ts, ys).slope;
}

double hittingTimeCdf(const QndModel& model, const Eigen::VectorXd& q0, int alpha, double t) {
    if (t <= 0.0) return 0.0;
    const RateTable table = rateTable(model);
    double survive = 0.0;
    for (int b = 0; b < model.dim(); ++b)
        survive += q0[b] * std::exp(-table.lambdaHit(alpha, b) * t);
    return 1.0 - survive;
}

std::vector<std::size_t> extinctionChannels(const QndModel& model, int alpha) {
    std::vector<std::size_t> out;
    const std::size_t p = model.diffusiveCount();
    for (std::size_t j = p; j < model.channels.size(); ++j)
        if (model.channels[j].theta[alpha] == 0.0) out.push_back(j - p);
    return out;
}

}  // namespace qnd

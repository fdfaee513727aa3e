#include "qnd/qdyn.hpp"

#include <cmath>

namespace qnd {

Eigen::MatrixXcd lindblad(const GeneralModel& model, const Eigen::MatrixXcd& rho) {
    if (rho.rows() != model.dim || rho.cols() != model.dim)
        throw StateInvalid("lindblad: state dimension mismatch");
    const std::complex<double> iu(0.0, 1.0);
    Eigen::MatrixXcd out = -iu * (model.H * rho - rho * model.H);
    for (const auto& c : model.C) {
        const Eigen::MatrixXcd cc = c.adjoint() * c;
        out += c * rho * c.adjoint() - 0.5 * (cc * rho + rho * cc);
    }
    return out;
}

SmeGenerators smeGenerators(const GeneralModel& model, const Eigen::MatrixXcd& rho) {
    if (rho.rows() != model.dim || rho.cols() != model.dim)
        throw StateInvalid("smeGenerators: state dimension mismatch");
    SmeGenerators gen;
    gen.jump.reserve(model.C.size());
    gen.intensity.reserve(model.C.size());
    gen.diffusion.reserve(model.C.size());
    for (const auto& c : model.C) {
        Eigen::MatrixXcd j = c * rho * c.adjoint();
        gen.intensity.push_back(j.trace().real());
        const Eigen::MatrixXcd crho = c * rho;
        const double mean = 2.0 * crho.trace().real();  // Tr[(C+C*)rho]
        gen.diffusion.push_back(crho + crho.adjoint() - mean * rho);
        gen.jump.push_back(std::move(j));
    }
    return gen;
}

double minEigenvalueHermitian(const Eigen::MatrixXcd& m) {
    if (m.rows() == 2) {
        const double a = m(0, 0).real();
        const double c = m(1, 1).real();
        const double h = 0.5 * (a - c);
        return 0.5 * (a + c) - std::sqrt(h * h + std::norm(m(0, 1)));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void validateDensityMatrix(const Eigen::MatrixXcd& rho) {
    if (rho.rows() != rho.cols()) throw StateInvalid("density matrix must be square");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kDensityTol)
        throw StateInvalid("density matrix is not Hermitian");
    if (std::abs(rho.trace().real() - 1.0) > kDensityTol || std::abs(rho.trace().imag()) > kDensityTol)
        throw StateInvalid("density matrix trace is not 1");
    if (minEigenvalueHermitian(rho) < kEigRepairFloor)
        throw StateInvalid("density matrix has a negative eigenvalue");
}

std::vector<double> MeasurementRecord::jumpTimes(std::size_t countingChannel) const {
    std::vector<double> out;
    for (std::size_t k : jumpSteps.at(countingChannel))
        out.push_back(static_cast<double>(k + 1) * dt);
    return out;
}

std::size_t MeasurementRecord::totalJumps() const {
    std::size_t n = 0;
    for (const auto& js : jumpSteps) n += js.size();
    return n;
}

std::size_t stepCount(double T, double dt) {
    if (dt <= 0.0) throw ConfigError("dt must be positive");
    if (T <= 0.0) throw ConfigError("T must be positive");
    const double ratio = T / dt;
    const auto k = static_cast<std::size_t>(std::llround(ratio));
    if (k == 0 || std::abs(ratio - static_cast<double>(k)) > 1e-6)
        throw ConfigError("T must be an integral multiple of dt");
    return k;
}

namespace {

// Eigenvalue clamp used when a step leaves the positive cone.
void clampNegativeEigenvalues(Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
    Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
    rho = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

Eigen::MatrixXcd stepSme(const GeneralModel& model, const Eigen::MatrixXcd& rho, double dt,
                         const NoiseIncrements& noise, StepCounters* counters,
                         std::vector<int>* firedOut) {
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channelCount() - p;
    if (noise.dW.size() != p || noise.u.size() != m)
        throw StateInvalid("stepSme: noise increment count does not match channels");
    StepCounters local;
    StepCounters& ctr = counters ? *counters : local;

    const auto gen = smeGenerators(model, rho);
    for (std::size_t j = 0; j < m; ++j)
        if (gen.intensity[p + j] * dt > kMaxIntensityDt)
            throw StepTooLarge("jump intensity violates v*dt <= " + std::to_string(kMaxIntensityDt));

    Eigen::MatrixXcd next = rho + lindblad(model, rho) * dt;
    for (std::size_t i = 0; i < p; ++i) next += gen.diffusion[i] * noise.dW[i];
    for (std::size_t j = 0; j < m; ++j) {
        const double v = gen.intensity[p + j];
        if (v > kIntensityEps)
            next -= (gen.jump[p + j] / v - rho) * (v * dt);
    }

    if (firedOut) firedOut->assign(m, 0);
    for (std::size_t j = 0; j < m; ++j) {
        const double v = gen.intensity[p + j];
        if (v <= kIntensityEps || noise.u[j] >= v * dt) continue;
        const Eigen::MatrixXcd& c = model.C[p + j];
        const Eigen::MatrixXcd jumped = c * next * c.adjoint();
        const double vNext = jumped.trace().real();
        if (vNext <= kIntensityEps) {
            ++ctr.skippedJumps;
            continue;
        }
        next = jumped / vNext;
        ++ctr.jumps;
        if (firedOut) (*firedOut)[j] = 1;
    }

    next = 0.5 * (next + next.adjoint()).eval();
    const double lo = minEigenvalueHermitian(next);
    if (lo < kEigInvalid)
        throw StateInvalid("state left the positive cone (min eigenvalue " + std::to_string(lo) + ")");
    if (lo < kEigRepairFloor) {
        clampNegativeEigenvalues(next);
        ++ctr.stateClips;
    }
    const double tr = next.trace().real();
    if (!(tr > 0.0)) throw StateInvalid("state lost all mass");
    next /= tr;
    return next;
}

Trajectory simulateTrajectory(const GeneralModel& model, const Eigen::MatrixXcd& rho0,
                              double T, double dt, std::uint64_t seed,
                              const TrajectoryOptions& opts) {
    validateDensityMatrix(rho0);
    if (rho0.rows() != model.dim) throw StateInvalid("initial state dimension mismatch");
    const std::size_t steps = stepCount(T, dt);
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channelCount() - p;
    const double sqrtDt = std::sqrt(dt);

    ChannelStreams streams(seed, 0, model.channelCount());

    Trajectory out;
    out.dt = dt;
    out.seed = seed;
    out.record.dt = dt;
    out.record.steps = steps;
    out.record.y.assign(p, std::vector<double>(steps + 1, 0.0));
    out.record.jumpSteps.assign(m, {});
    out.times.reserve(steps + 1);
    out.q.reserve(steps + 1);

    Eigen::MatrixXcd rho = rho0;
    NoiseIncrements noise;
    noise.dW.resize(p);
    noise.u.resize(m);
    std::vector<int> fired(m, 0);

    auto pushState = [&](std::size_t k) {
        out.times.push_back(static_cast<double>(k) * dt);
        out.q.push_back(rho.diagonal().real());
        if (opts.storeStates) out.states.push_back(rho);
    };
    pushState(0);

    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t i = 0; i < p; ++i) noise.dW[i] = streams[i].gaussian() * sqrtDt;
        for (std::size_t j = 0; j < m; ++j) noise.u[j] = streams[p + j].uniform();

        // record the diffusive outputs dy = dW + Tr[(C+C*)rho] dt
        for (std::size_t i = 0; i < p; ++i) {
            const double mean = 2.0 * (model.C[i] * rho).trace().real();
            out.record.y[i][k + 1] = out.record.y[i][k] + (noise.dW[i] + mean * dt);
        }

        rho = stepSme(model, rho, dt, noise, &out.repairs, &fired);
        for (std::size_t j = 0; j < m; ++j)
            if (fired[j]) out.record.jumpSteps[j].push_back(k);
        pushState(k + 1);
    }
    return out;
}

void validateSimplex(const Eigen::VectorXd& q, double tol) {
    if (q.size() < 2) throw ConfigError("population vector needs dim >= 2");
    if (q.minCoeff() < -tol) throw ConfigError("population vector has a negative entry");
    if (std::abs(q.sum() - 1.0) > tol) throw ConfigError("population vector does not sum to 1");
}

void channelMeans(const QndModel& model, const Eigen::VectorXd& q,
                  std::vector<double>& rbar, std::vector<double>& thbar) {
    const std::size_t p = model.diffusiveCount();
    rbar.resize(p);
    thbar.resize(model.channels.size() - p);
    for (std::size_t i = 0; i < p; ++i) rbar[i] = model.channels[i].r.dot(q);
    for (std::size_t j = p; j < model.channels.size(); ++j)
        thbar[j - p] = model.channels[j].theta.dot(q);
}

void populationStep(const QndModel& model, Eigen::VectorXd& q, std::span<const double> dy,
                    std::span<const int> jumpCounts, double dt, StepCounters& counters) {
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    if (dy.size() != p || jumpCounts.size() != m)
        throw GridMismatch("populationStep: record does not match model channels");
    const int d = model.dim();

    static thread_local std::vector<double> rbar, thbar;
    channelMeans(model, q, rbar, thbar);
    for (std::size_t j = 0; j < m; ++j)
        if (thbar[j] * dt > kMaxIntensityDt)
            throw StepTooLarge("jump intensity violates v*dt <= " + std::to_string(kMaxIntensityDt));

    for (int a = 0; a < d; ++a) {
        double factor = 1.0;
        for (std::size_t i = 0; i < p; ++i)
            factor += (model.channels[i].r[a] - rbar[i]) * (dy[i] - rbar[i] * dt);
        for (std::size_t j = 0; j < m; ++j)
            factor -= (model.channels[p + j].theta[a] - thbar[j]) * dt;
        q[a] *= factor;
    }

    for (std::size_t j = 0; j < m; ++j) {
        if (jumpCounts[j] <= 0) continue;
        if (thbar[j] <= kIntensityEps)
            throw DegenerateFilter("jump arrived on a channel with vanishing predicted intensity");
        const auto& theta = model.channels[p + j].theta;
        for (int rep = 0; rep < jumpCounts[j]; ++rep) {
            for (int a = 0; a < d; ++a) q[a] *= theta[a];
            ++counters.jumps;
        }
    }

    // repair: clip negatives, renormalize (entries end up in [0,1])
    double sum = 0.0;
    for (int a = 0; a < d; ++a) {
        if (q[a] < 0.0) {
            q[a] = 0.0;
            ++counters.populationClips;
        }
        sum += q[a];
    }
    if (!(sum > 0.0))
        throw DegenerateFilter("all populations vanished after the jump update");
    q /= sum;
}

QTrajectory simulatePopulations(const QndModel& model, const Eigen::VectorXd& q0, double T,
                                double dt, std::uint64_t seed, const PopulationOptions& opts) {
    validateSimplex(q0);
    if (q0.size() != model.dim()) throw ConfigError("q0 dimension does not match model");
    const std::size_t steps = stepCount(T, dt);
    const std::size_t p = model.diffusiveCount();
    const std::size_t m = model.channels.size() - p;
    const double sqrtDt = std::sqrt(dt);

    ChannelStreams streams(seed, 0, model.channels.size());

    QTrajectory out;
    out.dt = dt;
    out.seed = seed;
    out.record.dt = dt;
    out.record.steps = steps;
    out.record.y.assign(p, std::vector<double>(steps + 1, 0.0));
    out.record.jumpSteps.assign(m, {});
    if (opts.keepNoise) {
        out.noise.emplace();
        out.noise->dt = dt;
        out.noise->steps = steps;
        out.noise->dW.assign(p, std::vector<double>(steps, 0.0));
        out.noise->jumpSteps.assign(m, {});
    }
    out.times.reserve(steps + 1);
    out.q.reserve(steps + 1);

    Eigen::VectorXd q = q0;
    out.times.push_back(0.0);
    out.q.push_back(q);

    std::vector<double> rbar, thbar, dy(p);
    std::vector<int> jumpCounts(m, 0);

    for (std::size_t k = 0; k < steps; ++k) {
        channelMeans(model, q, rbar, thbar);

        for (std::size_t i = 0; i < p; ++i) {
            const double dW = streams[i].gaussian() * sqrtDt;
            const double yNext = out.record.y[i][k] + (dW + rbar[i] * dt);
            out.record.y[i][k + 1] = yNext;
            // feed the differenced value so a record consumer sees the same bits
            dy[i] = yNext - out.record.y[i][k];
            if (out.noise) out.noise->dW[i][k] = dW;
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double u = streams[p + j].uniform();
            const bool fire = thbar[j] > kIntensityEps && u < thbar[j] * dt;
            jumpCounts[j] = fire ? 1 : 0;
            if (fire) {
                out.record.jumpSteps[j].push_back(k);
                if (out.noise) out.noise->jumpSteps[j].push_back(k);
            }
        }

        populationStep(model, q, dy, jumpCounts, dt, out.repairs);
        out.times.push_back(static_cast<double>(k + 1) * dt);
        out.q.push_back(q);
    }
    return out;
}

}  // namespace qnd

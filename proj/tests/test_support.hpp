#pragma once

#include <complex>
#include <random>
#include <vector>

#include "qnd/model.hpp"
#include "qnd/qdyn.hpp"

namespace qndtest {

using namespace qnd;

inline QndModel qubitDiffusive() {
    Eigen::VectorXcd c(2);
    c << 1.0, -1.0;
    return QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                          {Channel::make(ChannelKind::Diffusive, c)});
}

/// Counting qubit with intensities theta = (th0, th1), real eigenvalues.
inline QndModel qubitCountingTheta(double th0, double th1) {
    Eigen::VectorXcd c(2);
    c << std::sqrt(th0), std::sqrt(th1);
    return QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                          {Channel::make(ChannelKind::Counting, c)});
}

/// Diffusive c = (1,-1) plus counting theta = (4,1); rates add.
inline QndModel mixedQubit() {
    Eigen::VectorXcd cd(2), cc(2);
    cd << 1.0, -1.0;
    cc << 2.0, 1.0;
    return QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                          {Channel::make(ChannelKind::Diffusive, cd),
                           Channel::make(ChannelKind::Counting, cc)});
}

inline Eigen::VectorXd simplex2(double q0) {
    Eigen::VectorXd q(2);
    q << q0, 1.0 - q0;
    return q;
}

inline Eigen::VectorXd randomSimplex(std::mt19937_64& rng, int d) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd q(d);
    for (int a = 0; a < d; ++a) q[a] = expo(rng);
    return q / q.sum();
}

inline std::complex<double> randomComplex(std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    return {g(rng), g(rng)};
}

struct RandomModelOptions {
    int minDim = 2;
    int maxDim = 4;
    int maxDiffusive = 2;
    int maxCounting = 2;
    double scale = 1.0;
    /// counting eigenvalue moduli kept in [0.3, 1.0]*scale so every
    /// intensity is bounded away from zero
    bool positiveIntensities = false;
};

inline QndModel randomQndModel(std::mt19937_64& rng, const RandomModelOptions& opt = {}) {
    std::uniform_int_distribution<int> dimDist(opt.minDim, opt.maxDim);
    const int d = dimDist(rng);
    std::uniform_int_distribution<int> pDist(0, opt.maxDiffusive);
    std::uniform_int_distribution<int> mDist(0, opt.maxCounting);
    int p = pDist(rng);
    int m = mDist(rng);
    if (p + m == 0) p = 1;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Channel> channels;
    for (int i = 0; i < p; ++i) {
        Eigen::VectorXcd c(d);
        for (int a = 0; a < d; ++a) c[a] = randomComplex(rng, opt.scale);
        channels.push_back(Channel::make(ChannelKind::Diffusive, c));
    }
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXcd c(d);
        for (int a = 0; a < d; ++a) {
            if (opt.positiveIntensities) {
                const double mod = (0.3 + 0.7 * unit(rng)) * opt.scale;
                const double phase = 2.0 * M_PI * unit(rng);
                c[a] = std::polar(mod, phase);
            } else {
                c[a] = randomComplex(rng, opt.scale);
            }
        }
        channels.push_back(Channel::make(ChannelKind::Counting, c));
    }
    Eigen::VectorXd eps(d);
    std::normal_distribution<double> g(0.0, opt.scale);
    for (int a = 0; a < d; ++a) eps[a] = g(rng);
    return QndModel::make(PointerBasis::withDim(d), eps, channels);
}

/// Weak-coupling model for pathwise scheme cross-checks: with all channel
/// eigenvalues in a small disk, two consistent discretizations driven by
/// the same noise stay within O(dt) of each other over a long horizon,
/// while a formula error accumulates linearly in t and blows the bound.
/// (Strong coupling would amplify the one-step defects through the
/// collapse bifurcation instead.)
inline QndModel weakCouplingModel(std::mt19937_64& rng, double radius = 0.1) {
    std::uniform_int_distribution<int> dimDist(2, 4);
    const int d = dimDist(rng);
    std::uniform_int_distribution<int> pDist(1, 2), mDist(0, 2);
    const int p = pDist(rng), m = mDist(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Channel> channels;
    for (int i = 0; i < p; ++i) {
        Eigen::VectorXcd c(d);
        for (int a = 0; a < d; ++a)
            c[a] = std::polar(radius * std::sqrt(unit(rng)), 2.0 * M_PI * unit(rng));
        channels.push_back(Channel::make(ChannelKind::Diffusive, c));
    }
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXcd c(d);
        for (int a = 0; a < d; ++a)
            c[a] = std::polar(radius * (0.6 + 0.4 * unit(rng)), 2.0 * M_PI * unit(rng));
        channels.push_back(Channel::make(ChannelKind::Counting, c));
    }
    return QndModel::make(PointerBasis::withDim(d), Eigen::VectorXd::Zero(d), channels);
}

inline Eigen::MatrixXcd randomDensityMatrix(std::mt19937_64& rng, int d) {
    Eigen::MatrixXcd g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = randomComplex(rng, 1.0);
    Eigen::MatrixXcd rho = g * g.adjoint();
    rho /= rho.trace().real();
    // symmetrize the floating-point dust
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return rho;
}

/// Independent evaluation of the SME generators with explicit index loops;
/// oracle for the production (Eigen-expression) implementation.
struct NaiveGenerators {
    Eigen::MatrixXcd L;
    std::vector<Eigen::MatrixXcd> J;
    std::vector<double> v;
    std::vector<Eigen::MatrixXcd> H;
};

inline Eigen::MatrixXcd naiveMul(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) out(i, j) += A(i, k) * B(k, j);
    return out;
}

inline Eigen::MatrixXcd naiveAdjoint(const Eigen::MatrixXcd& A) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXcd out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = std::conj(A(j, i));
    return out;
}

inline NaiveGenerators naiveGenerators(const GeneralModel& model, const Eigen::MatrixXcd& rho) {
    NaiveGenerators out;
    const std::complex<double> iu(0.0, 1.0);
    out.L = -iu * (naiveMul(model.H, rho) - naiveMul(rho, model.H));
    for (const auto& c : model.C) {
        const Eigen::MatrixXcd cd = naiveAdjoint(c);
        const Eigen::MatrixXcd j = naiveMul(naiveMul(c, rho), cd);
        const Eigen::MatrixXcd cc = naiveMul(cd, c);
        out.L += j - 0.5 * (naiveMul(cc, rho) + naiveMul(rho, cc));
        double tr = 0.0;
        for (int a = 0; a < model.dim; ++a) tr += j(a, a).real();
        out.J.push_back(j);
        out.v.push_back(tr);
        double mean = 0.0;
        const Eigen::MatrixXcd crho = naiveMul(c, rho);
        const Eigen::MatrixXcd rhocd = naiveMul(rho, cd);
        for (int a = 0; a < model.dim; ++a) mean += (crho(a, a) + rhocd(a, a)).real();
        out.H.push_back(crho + rhocd - mean * rho);
    }
    return out;
}

}  // namespace qndtest

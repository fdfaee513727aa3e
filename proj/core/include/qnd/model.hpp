#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

inline constexpr double kDiagonalTol = 1e-12;   // off-diagonal modulus threshold
inline constexpr double kNdTolDefault = 1e-10;  // non-degeneracy comparison tolerance

enum class ChannelKind { Diffusive, Counting };

/// The preferred basis the measurement leaves invariant.
struct PointerBasis {
    int dim = 0;
    std::vector<std::string> labels;

    static PointerBasis withDim(int d);
    void validate() const;
};

/// One measurement channel, already diagonal in the pointer basis:
/// c holds the operator eigenvalues, r = c + conj(c) the homodyne drift
/// coefficients, theta = |c|^2 the counting intensities.
struct Channel {
    ChannelKind kind = ChannelKind::Diffusive;
    Eigen::VectorXcd c;
    Eigen::VectorXd r;
    Eigen::VectorXd theta;

    static Channel make(ChannelKind kind, Eigen::VectorXcd c);
};

/// Diagonal (QND) system: Hamiltonian eigenvalues plus channels, stored
/// with the diffusive block first so channel indices follow the usual
/// 0..p diffusive / p+1..n counting convention.
struct QndModel {
    PointerBasis basis;
    Eigen::VectorXd epsilon;
    std::vector<Channel> channels;

    int dim() const { return basis.dim; }
    std::size_t diffusiveCount() const;
    std::size_t countingCount() const { return channels.size() - diffusiveCount(); }

    /// Normalizes channel ordering (stable: diffusive block first).
    static QndModel make(PointerBasis basis, Eigen::VectorXd epsilon,
                         std::vector<Channel> channels);
};

/// Arbitrary (possibly non-diagonal) system for nondemolition checking and
/// full density-matrix simulation. Channel ordering is normalized the same
/// way as in QndModel.
struct GeneralModel {
    int dim = 0;
    Eigen::MatrixXcd H;
    std::vector<ChannelKind> kinds;
    std::vector<Eigen::MatrixXcd> C;

    std::size_t diffusiveCount() const;
    std::size_t channelCount() const { return C.size(); }

    static GeneralModel make(Eigen::MatrixXcd H, std::vector<ChannelKind> kinds,
                             std::vector<Eigen::MatrixXcd> C);
};

struct DiagonalityViolation {
    std::string op;  // "H" or "C<i>"
    int row = 0;
    int col = 0;
    std::complex<double> value{};
};

/// Extracts the diagonal decomposition, or throws DiagonalityError listing
/// every offending off-diagonal entry.
QndModel diagonalize(const GeneralModel& model, const PointerBasis& basis);

/// Collects the off-diagonal entries above kDiagonalTol without throwing.
std::vector<DiagonalityViolation> diagonalityViolations(const GeneralModel& model);

/// Builds the dense-operator form of a diagonal model.
GeneralModel embed(const QndModel& model);

struct GeneratorLeak {
    int alpha = 0;  // pointer projector fed to the generator
    int beta = 0;   // population that leaks
    double value = 0.0;
};

struct NondemolitionReport {
    bool ok = false;
    std::vector<DiagonalityViolation> violations;
    /// Nonzero L(|alpha><alpha|)_{beta,beta} entries, the necessary
    /// condition violated by any non-diagonal channel.
    std::vector<GeneratorLeak> generatorLeaks;
};

NondemolitionReport checkNondemolition(const GeneralModel& model, const PointerBasis& basis);

struct NdReport {
    bool ok = false;
    /// Pointer pairs no channel can tell apart.
    std::vector<std::pair<int, int>> indistinguishable;
};

NdReport checkNdAssumption(const QndModel& model, double tol = kNdTolDefault);

/// Closed-form convergence and hitting rates.
///  Lambda(a,g):  exponential decay rate of q_a relative to limit pointer g;
///                +inf when some counting intensity theta(i|a) vanishes
///                while theta(i|g) > 0 (finite-time extinction regime).
///  lambdaHit(a,g): sum of theta(i|g) over counting channels with
///                theta(i|a) = 0; drives the extinction-time law.
struct RateTable {
    Eigen::MatrixXd Lambda;
    Eigen::MatrixXd lambdaHit;
    /// gamma indices where some counting intensity theta(i|gamma) = 0; the
    /// tilted measure for such gamma has an undefined jump intensity.
    std::vector<bool> degenerateConditioning;

    /// Lambda(alpha,gamma), guarded: throws DegenerateRate when gamma
    /// cannot serve as a conditioning pointer.
    double conditionedRate(int alpha, int gamma) const;

    /// Smallest finite positive off-diagonal rate; 0 if none exists.
    double minPositiveRate() const;
};

RateTable rateTable(const QndModel& model);

struct RateComparison {
    double diffusive = 0.0;
    double counting = 0.0;
    bool inequalityHolds = false;
};

/// Rates of the single-hermitian-channel example read both ways: as a
/// diffusive record, (cAlpha - cUpsilon)^2, and as a counting record,
/// -cUpsilon^2 [ln(cAlpha^2/cUpsilon^2) + 1 - cAlpha^2/cUpsilon^2].
RateComparison compareDiffusiveCountingRates(double cAlpha, double cUpsilon);

}  // namespace qnd

#include "qnd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace qnd {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHermTol = 1e-12;
}  // namespace

PointerBasis PointerBasis::withDim(int d) {
    PointerBasis b;
    b.dim = d;
    for (int i = 0; i < d; ++i) b.labels.push_back(std::to_string(i));
    b.validate();
    return b;
}

void PointerBasis::validate() const {
    if (dim < 2) throw ConfigError("pointer basis needs dim >= 2");
    if (static_cast<int>(labels.size()) != dim)
        throw ConfigError("pointer basis label count does not match dim");
    std::set<std::string> uniq(labels.begin(), labels.end());
    if (static_cast<int>(uniq.size()) != dim)
        throw ConfigError("pointer basis labels must be pairwise distinct");
}

Channel Channel::make(ChannelKind kind, Eigen::VectorXcd c) {
    Channel ch;
    ch.kind = kind;
    ch.r = c.real() * 2.0;
    ch.theta = c.cwiseAbs2();
    ch.c = std::move(c);
    return ch;
}

std::size_t QndModel::diffusiveCount() const {
    std::size_t p = 0;
    while (p < channels.size() && channels[p].kind == ChannelKind::Diffusive) ++p;
    return p;
}

QndModel QndModel::make(PointerBasis basis, Eigen::VectorXd epsilon,
                        std::vector<Channel> channels) {
    basis.validate();
    if (epsilon.size() != basis.dim)
        throw ConfigError("epsilon length does not match basis dimension");
    for (const auto& ch : channels)
        if (ch.c.size() != basis.dim)
            throw ConfigError("channel eigenvalue vector length does not match dim");
    std::stable_sort(channels.begin(), channels.end(),
                     [](const Channel& a, const Channel& b) {
                         return a.kind == ChannelKind::Diffusive && b.kind == ChannelKind::Counting;
                     });
    QndModel m;
    m.basis = std::move(basis);
    m.epsilon = std::move(epsilon);
    m.channels = std::move(channels);
    return m;
}

std::size_t GeneralModel::diffusiveCount() const {
    std::size_t p = 0;
    while (p < kinds.size() && kinds[p] == ChannelKind::Diffusive) ++p;
    return p;
}

GeneralModel GeneralModel::make(Eigen::MatrixXcd H, std::vector<ChannelKind> kinds,
                                std::vector<Eigen::MatrixXcd> C) {
    GeneralModel m;
    m.dim = static_cast<int>(H.rows());
    if (H.cols() != m.dim) throw ConfigError("H must be square");
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > kHermTol)
        throw ConfigError("H must be Hermitian");
    if (kinds.size() != C.size()) throw ConfigError("one kind per channel operator required");
    for (const auto& op : C)
        if (op.rows() != m.dim || op.cols() != m.dim)
            throw ConfigError("channel operator dimension mismatch");

    // normalize ordering in lockstep: diffusive block first
    std::vector<std::size_t> order(kinds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return kinds[a] == ChannelKind::Diffusive && kinds[b] == ChannelKind::Counting;
    });
    m.H = std::move(H);
    for (std::size_t i : order) {
        m.kinds.push_back(kinds[i]);
        m.C.push_back(std::move(C[i]));
    }
    return m;
}

std::vector<DiagonalityViolation> diagonalityViolations(const GeneralModel& model) {
    std::vector<DiagonalityViolation> out;
    auto scan = [&](const Eigen::MatrixXcd& op, const std::string& name) {
        for (int a = 0; a < model.dim; ++a)
            for (int b = 0; b < model.dim; ++b)
                if (a != b && std::abs(op(a, b)) > kDiagonalTol)
                    out.push_back({name, a, b, op(a, b)});
    };
    scan(model.H, "H");
    for (std::size_t i = 0; i < model.C.size(); ++i)
        scan(model.C[i], "C" + std::to_string(i));
    return out;
}

QndModel diagonalize(const GeneralModel& model, const PointerBasis& basis) {
    basis.validate();
    if (model.dim != basis.dim)
        throw ConfigError("model and basis dimensions differ");
    auto violations = diagonalityViolations(model);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "model is not diagonal in the pointer basis:";
        for (const auto& v : violations)
            msg << " (" << v.op << "," << v.row << "," << v.col << ")";
        throw DiagonalityError(msg.str());
    }
    Eigen::VectorXd eps(model.dim);
    for (int a = 0; a < model.dim; ++a) eps[a] = model.H(a, a).real();
    std::vector<Channel> channels;
    channels.reserve(model.C.size());
    for (std::size_t i = 0; i < model.C.size(); ++i)
        channels.push_back(Channel::make(model.kinds[i], model.C[i].diagonal()));
    return QndModel::make(basis, std::move(eps), std::move(channels));
}

GeneralModel embed(const QndModel& model) {
    const int d = model.dim();
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(d, d);
    for (int a = 0; a < d; ++a) H(a, a) = model.epsilon[a];
    std::vector<ChannelKind> kinds;
    std::vector<Eigen::MatrixXcd> C;
    for (const auto& ch : model.channels) {
        kinds.push_back(ch.kind);
        Eigen::MatrixXcd op = Eigen::MatrixXcd::Zero(d, d);
        for (int a = 0; a < d; ++a) op(a, a) = ch.c[a];
        C.push_back(std::move(op));
    }
    return GeneralModel::make(std::move(H), std::move(kinds), std::move(C));
}

namespace {

// Dense Lindblad drift, duplicated here in minimal form to keep the
// structural check self-contained (qdyn has the production version).
Eigen::MatrixXcd lindbladDense(const GeneralModel& m, const Eigen::MatrixXcd& rho) {
    const std::complex<double> iu(0.0, 1.0);
    Eigen::MatrixXcd out = -iu * (m.H * rho - rho * m.H);
    for (const auto& c : m.C) {
        const Eigen::MatrixXcd cc = c.adjoint() * c;
        out += c * rho * c.adjoint() - 0.5 * (cc * rho + rho * cc);
    }
    return out;
}

}  // namespace

NondemolitionReport checkNondemolition(const GeneralModel& model, const PointerBasis& basis) {
    basis.validate();
    if (model.dim != basis.dim)
        throw ConfigError("model and basis dimensions differ");
    NondemolitionReport rep;
    rep.violations = diagonalityViolations(model);
    rep.ok = rep.violations.empty();
    // necessary condition: a pointer projector produces no population leak
    for (int a = 0; a < model.dim; ++a) {
        Eigen::MatrixXcd proj = Eigen::MatrixXcd::Zero(model.dim, model.dim);
        proj(a, a) = 1.0;
        const Eigen::MatrixXcd gen = lindbladDense(model, proj);
        for (int b = 0; b < model.dim; ++b) {
            if (b == a) continue;
            const double leak = gen(b, b).real();
            if (std::abs(leak) > kDiagonalTol) rep.generatorLeaks.push_back({a, b, leak});
        }
    }
    return rep;
}

NdReport checkNdAssumption(const QndModel& model, double tol) {
    NdReport rep;
    const int d = model.dim();
    for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
            bool separated = false;
            for (const auto& ch : model.channels) {
                const double gap = ch.kind == ChannelKind::Diffusive
                                       ? std::abs(ch.r[a] - ch.r[b])
                                       : std::abs(ch.theta[a] - ch.theta[b]);
                if (gap > tol) {
                    separated = true;
                    break;
                }
            }
            if (!separated) rep.indistinguishable.emplace_back(a, b);
        }
    }
    rep.ok = rep.indistinguishable.empty();
    return rep;
}

RateTable rateTable(const QndModel& model) {
    const int d = model.dim();
    RateTable table;
    table.Lambda = Eigen::MatrixXd::Zero(d, d);
    table.lambdaHit = Eigen::MatrixXd::Zero(d, d);
    table.degenerateConditioning.assign(d, false);

    for (const auto& ch : model.channels)
        if (ch.kind == ChannelKind::Counting)
            for (int g = 0; g < d; ++g)
                if (ch.theta[g] == 0.0) table.degenerateConditioning[g] = true;

    for (int a = 0; a < d; ++a) {
        for (int g = 0; g < d; ++g) {
            double rate = 0.0;
            double hit = 0.0;
            for (const auto& ch : model.channels) {
                if (ch.kind == ChannelKind::Diffusive) {
                    const double dr = ch.r[a] - ch.r[g];
                    rate += 0.5 * dr * dr;
                    continue;
                }
                const double ta = ch.theta[a];
                const double tg = ch.theta[g];
                if (ta == 0.0) {
                    hit += tg;
                    if (a != g && tg > 0.0) rate = kInf;
                } else if (tg == 0.0) {
                    // continuity limit: the channel never fires under the
                    // tilted law, leaving only the -theta(i|a) compensator
                    rate += ta;
                } else {
                    rate -= tg * (1.0 - ta / tg + std::log(ta / tg));
                }
            }
            table.Lambda(a, g) = a == g ? 0.0 : rate;
            table.lambdaHit(a, g) = hit;
        }
    }
    return table;
}

double RateTable::conditionedRate(int alpha, int gamma) const {
    if (degenerateConditioning.at(gamma))
        throw DegenerateRate("conditioning pointer " + std::to_string(gamma) +
                             " has a counting channel with zero intensity");
    return Lambda(alpha, gamma);
}

double RateTable::minPositiveRate() const {
    double best = kInf;
    for (int a = 0; a < Lambda.rows(); ++a)
        for (int g = 0; g < Lambda.cols(); ++g)
            if (a != g && Lambda(a, g) > 0.0 && std::isfinite(Lambda(a, g)))
                best = std::min(best, Lambda(a, g));
    return std::isfinite(best) ? best : 0.0;
}

RateComparison compareDiffusiveCountingRates(double cAlpha, double cUpsilon) {
    if (cAlpha == 0.0 || cUpsilon == 0.0)
        throw std::domain_error("compareDiffusiveCountingRates: eigenvalues must be nonzero");
    RateComparison cmp;
    cmp.diffusive = (cAlpha - cUpsilon) * (cAlpha - cUpsilon);
    const double ratio = (cAlpha * cAlpha) / (cUpsilon * cUpsilon);
    cmp.counting = -cUpsilon * cUpsilon * (std::log(ratio) + 1.0 - ratio);
    cmp.inequalityHolds = cmp.diffusive <= cmp.counting + 1e-12;
    return cmp;
}

}  // namespace qnd

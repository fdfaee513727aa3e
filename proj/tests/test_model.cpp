#include <doctest.h>

#include <cmath>

#include "qnd/model.hpp"
#include "qnd/model_io.hpp"
#include "qnd/qdyn.hpp"
#include "test_support.hpp"

using namespace qnd;
using qndtest::randomQndModel;

namespace {

GeneralModel qubitGeneral(const Eigen::MatrixXcd& H, std::vector<Eigen::MatrixXcd> C,
                          std::vector<ChannelKind> kinds) {
    return GeneralModel::make(H, std::move(kinds), std::move(C));
}

Eigen::MatrixXcd sigmaMinus() {
    Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(2, 2);
    c(0, 1) = 1.0;
    return c;
}

}  // namespace

TEST_CASE("diagonalize reads off a diagonal model") {
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2, 2);
    H(0, 0) = 1.0;
    H(1, 1) = -1.0;
    Eigen::MatrixXcd C0 = Eigen::MatrixXcd::Zero(2, 2);
    C0(0, 0) = 2.0;
    const auto model = diagonalize(qubitGeneral(H, {C0}, {ChannelKind::Diffusive}),
                                   PointerBasis::withDim(2));
    CHECK(model.epsilon[0] == 1.0);
    CHECK(model.epsilon[1] == -1.0);
    CHECK(model.channels[0].c[0] == std::complex<double>(2.0, 0.0));
    CHECK(model.channels[0].c[1] == std::complex<double>(0.0, 0.0));
    CHECK(model.channels[0].r[0] == 4.0);
    CHECK(model.channels[0].r[1] == 0.0);
    CHECK(model.channels[0].theta[0] == 4.0);
    CHECK(model.channels[0].theta[1] == 0.0);
}

TEST_CASE("diagonalize rejects off-diagonal entries with their location") {
    const Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2, 2);
    SUBCASE("raising operator channel") {
        const auto general = qubitGeneral(H, {sigmaMinus()}, {ChannelKind::Diffusive});
        CHECK_THROWS_WITH_AS(diagonalize(general, PointerBasis::withDim(2)),
                             doctest::Contains("(C0,0,1)"), DiagonalityError);
    }
    SUBCASE("non-diagonal Hamiltonian") {
        Eigen::MatrixXcd Hx = Eigen::MatrixXcd::Zero(2, 2);
        Hx(0, 1) = 0.5;
        Hx(1, 0) = 0.5;
        Eigen::MatrixXcd C0 = Eigen::MatrixXcd::Zero(2, 2);
        C0(0, 0) = 1.0;
        C0(1, 1) = -1.0;
        const auto general = qubitGeneral(Hx, {C0}, {ChannelKind::Diffusive});
        CHECK_THROWS_WITH_AS(diagonalize(general, PointerBasis::withDim(2)),
                             doctest::Contains("(H,0,1)"), DiagonalityError);
    }
}

TEST_CASE("checkNondemolition accepts diagonal models") {
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2, 2);
    Eigen::MatrixXcd C0 = Eigen::MatrixXcd::Zero(2, 2);
    C0(0, 0) = 1.0;
    C0(1, 1) = -1.0;
    const auto rep = checkNondemolition(qubitGeneral(H, {C0}, {ChannelKind::Diffusive}),
                                        PointerBasis::withDim(2));
    CHECK(rep.ok);
    CHECK(rep.violations.empty());
    CHECK(rep.generatorLeaks.empty());
}

TEST_CASE("sigma-minus channel leaks population out of |1><1|") {
    const Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(2, 2);
    const auto general = qubitGeneral(H, {sigmaMinus()}, {ChannelKind::Counting});
    const auto rep = checkNondemolition(general, PointerBasis::withDim(2));
    CHECK_FALSE(rep.ok);
    REQUIRE(rep.violations.size() == 1);
    CHECK(rep.violations[0].op == "C0");
    CHECK(rep.violations[0].row == 0);
    CHECK(rep.violations[0].col == 1);
    // brute-force generator evaluation: L(|1><1|)_{00} = 1
    REQUIRE(rep.generatorLeaks.size() == 1);
    CHECK(rep.generatorLeaks[0].alpha == 1);
    CHECK(rep.generatorLeaks[0].beta == 0);
    CHECK(rep.generatorLeaks[0].value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("non-diagonal H is flagged and drives superposition populations") {
    Eigen::MatrixXcd Hx = Eigen::MatrixXcd::Zero(2, 2);
    Hx(0, 1) = 0.5;
    Hx(1, 0) = 0.5;
    Eigen::MatrixXcd C0 = Eigen::MatrixXcd::Zero(2, 2);
    C0(0, 0) = 1.0;
    C0(1, 1) = -1.0;
    const auto general = qubitGeneral(Hx, {C0}, {ChannelKind::Diffusive});
    const auto rep = checkNondemolition(general, PointerBasis::withDim(2));
    CHECK_FALSE(rep.ok);
    REQUIRE_FALSE(rep.violations.empty());
    CHECK(rep.violations[0].op == "H");
    // numerical probe: the drift of q_0 at a superposition state is nonzero
    Eigen::MatrixXcd plus(2, 2), plusI(2, 2);
    plus << 0.5, 0.5, 0.5, 0.5;
    plusI << 0.5, std::complex<double>(0.0, -0.5), std::complex<double>(0.0, 0.5), 0.5;
    const double drift = std::max(std::abs(lindblad(general, plus)(0, 0)),
                                  std::abs(lindblad(general, plusI)(0, 0)));
    CHECK(drift > 0.1);
}

TEST_CASE("checkNdAssumption separates by r for diffusive, theta for counting") {
    SUBCASE("diffusive (1,-1) is non-degenerate") {
        const auto rep = checkNdAssumption(qndtest::qubitDiffusive());
        CHECK(rep.ok);
        CHECK(rep.indistinguishable.empty());
    }
    SUBCASE("counting with opposite eigenvalues of equal norm is degenerate") {
        Eigen::VectorXcd c(2);
        c << 1.0, -1.0;
        const auto model = QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                                          {Channel::make(ChannelKind::Counting, c)});
        const auto rep = checkNdAssumption(model);
        CHECK_FALSE(rep.ok);
        REQUIRE(rep.indistinguishable.size() == 1);
        CHECK(rep.indistinguishable[0] == std::make_pair(0, 1));
    }
    SUBCASE("three pointers jointly separated by two channels") {
        Eigen::VectorXcd c1(3), c2(3);
        c1 << 1.0, 1.0, -1.0;  // separates 2 from {0,1}
        c2 << 1.0, 2.0, 1.0;   // separates 0 from 1
        const auto model = QndModel::make(PointerBasis::withDim(3), Eigen::VectorXd::Zero(3),
                                          {Channel::make(ChannelKind::Diffusive, c1),
                                           Channel::make(ChannelKind::Counting, c2)});
        CHECK(checkNdAssumption(model).ok);
    }
}

TEST_CASE("rate table closed forms") {
    SUBCASE("diffusive qubit: 1/2 (r0 - r1)^2 = 8") {
        const auto table = rateTable(qndtest::qubitDiffusive());
        CHECK(table.Lambda(0, 0) == 0.0);
        CHECK(table.Lambda(1, 1) == 0.0);
        CHECK(table.Lambda(0, 1) == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(table.Lambda(1, 0) == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(table.lambdaHit.maxCoeff() == 0.0);
    }
    SUBCASE("counting theta = (4,1): 3 - ln 4") {
        const auto table = rateTable(qndtest::qubitCountingTheta(4.0, 1.0));
        CHECK(table.Lambda(0, 1) == doctest::Approx(3.0 - std::log(4.0)).epsilon(1e-12));
        // alpha=1, gamma=0: -4 (1 - 1/4 + ln(1/4))
        CHECK(table.Lambda(1, 0) ==
              doctest::Approx(-4.0 * (0.75 + std::log(0.25))).epsilon(1e-12));
    }
    SUBCASE("mixed model adds channel contributions") {
        const auto table = rateTable(qndtest::mixedQubit());
        CHECK(table.Lambda(0, 1) ==
              doctest::Approx(8.0 + 3.0 - std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("zero intensity: +inf rate, hitting rate, guarded conditioning") {
        const auto table = rateTable(qndtest::qubitCountingTheta(0.0, 2.0));
        CHECK(std::isinf(table.Lambda(0, 1)));
        CHECK(table.lambdaHit(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(table.lambdaHit(0, 0) == 0.0);
        CHECK(table.degenerateConditioning[0]);
        CHECK_FALSE(table.degenerateConditioning[1]);
        CHECK_THROWS_AS(table.conditionedRate(1, 0), DegenerateRate);
        CHECK(table.conditionedRate(0, 1) == table.Lambda(0, 1));
    }
}

TEST_CASE("diffusive vs counting rate comparison") {
    const auto equal = compareDiffusiveCountingRates(1.0, 1.0);
    CHECK(equal.diffusive == 0.0);
    CHECK(equal.counting == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(equal.inequalityHolds);

    const auto two = compareDiffusiveCountingRates(2.0, 1.0);
    CHECK(two.diffusive == doctest::Approx(1.0));
    CHECK(two.counting == doctest::Approx(3.0 - std::log(4.0)).epsilon(1e-12));
    CHECK(two.inequalityHolds);

    // opposite signs: equal-norm eigenvalues make the counting record blind
    const auto blind = compareDiffusiveCountingRates(-1.0, 1.0);
    CHECK(blind.diffusive == doctest::Approx(4.0));
    CHECK(blind.counting == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_FALSE(blind.inequalityHolds);

    CHECK_THROWS_AS(compareDiffusiveCountingRates(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(compareDiffusiveCountingRates(1.0, 0.0), std::domain_error);
}

TEST_CASE("rates are nonnegative and vanish only on degenerate pairs") {
    std::mt19937_64 rng(991);
    for (int trial = 0; trial < 40; ++trial) {
        const auto model = randomQndModel(rng);
        const auto table = rateTable(model);
        const auto nd = checkNdAssumption(model);
        for (int a = 0; a < model.dim(); ++a) {
            for (int g = 0; g < model.dim(); ++g) {
                if (a == g) {
                    CHECK(table.Lambda(a, g) == 0.0);
                    continue;
                }
                CHECK(table.Lambda(a, g) >= 0.0);
                const bool degeneratePair = [&] {
                    for (auto [x, y] : nd.indistinguishable)
                        if ((x == a && y == g) || (x == g && y == a)) return true;
                    return false;
                }();
                if (!degeneratePair && std::isfinite(table.Lambda(a, g)))
                    CHECK(table.Lambda(a, g) > 0.0);
            }
        }
    }
    // exact degeneracy: duplicated eigenvalues give exactly zero rate
    Eigen::VectorXcd c(3);
    c << std::complex<double>(0.4, 0.3), std::complex<double>(0.4, 0.3), 1.0;
    const auto model = QndModel::make(PointerBasis::withDim(3), Eigen::VectorXd::Zero(3),
                                      {Channel::make(ChannelKind::Diffusive, c)});
    CHECK(rateTable(model).Lambda(0, 1) == 0.0);
    CHECK_FALSE(checkNdAssumption(model).ok);
}

TEST_CASE("embedding then diagonalizing recovers the model exactly") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 30; ++trial) {
        const auto model = randomQndModel(rng);
        const auto back = diagonalize(embed(model), model.basis);
        CHECK(back.epsilon == model.epsilon);
        REQUIRE(back.channels.size() == model.channels.size());
        for (std::size_t i = 0; i < model.channels.size(); ++i) {
            CHECK(back.channels[i].kind == model.channels[i].kind);
            CHECK(back.channels[i].c == model.channels[i].c);
        }
    }
}

TEST_CASE("nondemolition check agrees with diagonalizability") {
    std::mt19937_64 rng(555);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        auto general = embed(randomQndModel(rng));
        const bool perturb = u(rng) < 0.5;
        if (perturb) {
            const int d = general.dim;
            const int row = static_cast<int>(u(rng) * d);
            const int col = (row + 1) % d;
            general.C[0](row, col) += 0.01;
        }
        const auto rep = checkNondemolition(general, PointerBasis::withDim(general.dim));
        bool diagonalizable = true;
        try {
            diagonalize(general, PointerBasis::withDim(general.dim));
        } catch (const DiagonalityError&) {
            diagonalizable = false;
        }
        CHECK(rep.ok == diagonalizable);
        CHECK(rep.ok == !perturb);
    }
}

TEST_CASE("hitting rates add over extinguishing channels") {
    Eigen::VectorXcd c1(2), c2(2);
    c1 << 0.0, std::sqrt(2.0);
    c2 << 0.0, std::sqrt(0.5);
    const auto model = QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                                      {Channel::make(ChannelKind::Counting, c1),
                                       Channel::make(ChannelKind::Counting, c2)});
    const auto table = rateTable(model);
    CHECK(table.lambdaHit(0, 1) == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(table.lambdaHit(1, 0) == 0.0);  // theta(i|1) > 0 everywhere
}

TEST_CASE("pointer basis invariants") {
    CHECK_THROWS_AS(PointerBasis::withDim(1), ConfigError);
    PointerBasis dup;
    dup.dim = 2;
    dup.labels = {"a", "a"};
    CHECK_THROWS_AS(dup.validate(), ConfigError);
}

TEST_CASE("channel ordering is normalized to diffusive block first") {
    Eigen::VectorXcd c(2);
    c << 1.0, 2.0;
    const auto model = QndModel::make(PointerBasis::withDim(2), Eigen::VectorXd::Zero(2),
                                      {Channel::make(ChannelKind::Counting, c),
                                       Channel::make(ChannelKind::Diffusive, c)});
    CHECK(model.channels[0].kind == ChannelKind::Diffusive);
    CHECK(model.channels[1].kind == ChannelKind::Counting);
    CHECK(model.diffusiveCount() == 1);
}

TEST_CASE("model files parse, reject mismatches with line numbers") {
    const std::string good = R"([system]
dim = 2
epsilon = 1, -1

[channel]
kind = diffusive
c = 1+0j, -1

[channel]
kind = counting
c = 2, 1
)";
    const auto general = parseModelText(good);
    CHECK(general.dim == 2);
    CHECK(general.channelCount() == 2);
    const auto model = diagonalize(general, PointerBasis::withDim(2));
    CHECK(model.channels[1].theta[0] == 4.0);

    SUBCASE("dimension mismatch carries the offending line") {
        const std::string bad = "[system]\ndim = 3\nepsilon = 1, -1\n";
        try {
            parseModelText(bad);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("expected 3") != std::string::npos);
        }
    }
    SUBCASE("channel vector length is checked") {
        const std::string bad =
            "[system]\ndim = 2\nepsilon = 1, -1\n[channel]\nkind = counting\nc = 1, 2, 3\n";
        CHECK_THROWS_AS(parseModelText(bad), ConfigError);
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(parseModelText("[system]\ndim = 2\nbogus = 1\n"), ConfigError);
    }
    SUBCASE("complex grammar") {
        CHECK(parseComplexScalar("2+3j", 1) == std::complex<double>(2.0, 3.0));
        CHECK(parseComplexScalar("-1.5e-2", 1) == std::complex<double>(-0.015, 0.0));
        CHECK(parseComplexScalar("-j", 1) == std::complex<double>(0.0, -1.0));
        CHECK(parseComplexScalar("0.5j", 1) == std::complex<double>(0.0, 0.5));
        CHECK(parseComplexScalar("1e-3+2e-4j", 1) == std::complex<double>(1e-3, 2e-4));
        CHECK_THROWS_AS(parseComplexScalar("nonsense", 3), ConfigError);
    }
    SUBCASE("parsed channels are normalized to the diffusive block first") {
        const std::string swapped = R"([system]
dim = 2
epsilon = 0, 0
[channel]
kind = counting
c = 2, 1
[channel]
kind = diffusive
c = 1, -1
)";
        const auto g = parseModelText(swapped);
        CHECK(g.kinds[0] == ChannelKind::Diffusive);
        CHECK(g.kinds[1] == ChannelKind::Counting);
        CHECK(g.C[0](0, 0) == std::complex<double>(1.0, 0.0));
        CHECK(g.C[1](0, 0) == std::complex<double>(2.0, 0.0));
    }
    SUBCASE("dense operators via H and C") {
        const std::string dense = R"([system]
dim = 2
H = 0, 0.5; 0.5, 0
[channel]
kind = diffusive
C = 0, 1; 0, 0
)";
        const auto g = parseModelText(dense);
        CHECK(g.H(0, 1) == std::complex<double>(0.5, 0.0));
        CHECK(g.C[0](0, 1) == std::complex<double>(1.0, 0.0));
        CHECK_FALSE(checkNondemolition(g, PointerBasis::withDim(2)).ok);
    }
}

TEST_CASE("content hash is stable and sensitive") {
    const std::string a = "[system]\ndim = 2\n";
    CHECK(contentHashHex(a) == contentHashHex(a));
    CHECK(contentHashHex(a) != contentHashHex(a + " "));
    CHECK(contentHashHex(a).size() == 16);
}

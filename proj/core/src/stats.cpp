#include "qnd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qnd {

double pairwiseSum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwiseSum(xs.first(half)) + pairwiseSum(xs.subspan(half));
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return pairwiseSum(xs) / static_cast<double>(xs.size());
}

double sampleVariance(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    const double m = mean(xs);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (xs[i] - m) * (xs[i] - m);
    return pairwiseSum(sq) / static_cast<double>(n - 1);
}

double sampleStdDev(std::span<const double> xs) { return std::sqrt(sampleVariance(xs)); }

double logSumExp(std::span<const double> xs) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : xs) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;  // all -inf (or a +inf dominates)
    double s = 0.0;
    for (double x : xs) s += std::exp(x - hi);
    return hi + std::log(s);
}

OlsFit olsFit(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size()) throw std::invalid_argument("olsFit: length mismatch");
    const std::size_t n = t.size();
    OlsFit fit;
    fit.n = n;
    if (n < 2) return fit;
    const double tm = mean(t);
    const double ym = mean(y);
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = t[i] - tm;
        stt += dt * dt;
        sty += dt * (y[i] - ym);
    }
    fit.slope = stt > 0.0 ? sty / stt : 0.0;
    fit.intercept = ym - fit.slope * tm;
    return fit;
}

namespace {

// Series expansion of P(a,x), valid for x < a+1.
double gammaPSeries(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) (modified Lentz), valid for x >= a+1.
double gammaQContinuedFraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularizedGammaQ(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("regularizedGammaQ: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gammaPSeries(a, x);
    return gammaQContinuedFraction(a, x);
}

double chiSquarePValue(double chi2, int dof) {
    if (dof <= 0) return 1.0;
    return regularizedGammaQ(0.5 * dof, 0.5 * chi2);
}

ChiSquareResult pearsonChiSquare(const std::vector<double>& observed,
                                 const std::vector<double>& expected,
                                 double minExpected) {
    if (observed.size() != expected.size())
        throw std::invalid_argument("pearsonChiSquare: length mismatch");
    std::vector<double> obs, exp;
    double poolObs = 0.0, poolExp = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] < minExpected) {
            poolObs += observed[i];
            poolExp += expected[i];
        } else {
            obs.push_back(observed[i]);
            exp.push_back(expected[i]);
        }
    }
    if (poolExp > 0.0) {
        if (poolExp >= minExpected || obs.empty()) {
            obs.push_back(poolObs);
            exp.push_back(poolExp);
        } else {
            // fold the undersized pool into the last regular cell
            obs.back() += poolObs;
            exp.back() += poolExp;
        }
    }
    ChiSquareResult res;
    res.dof = static_cast<int>(obs.size()) - 1;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (exp[i] > 0.0) {
            const double d = obs[i] - exp[i];
            res.statistic += d * d / exp[i];
        }
    }
    res.pValue = res.dof >= 1 ? chiSquarePValue(res.statistic, res.dof) : 1.0;
    return res;
}

double ksPValue(double d, double nEff) {
    if (d <= 0.0 || nEff <= 0.0) return 1.0;
    const double sn = std::sqrt(nEff);
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ksOneSampleCensored(std::vector<double> times, std::size_t total,
                             const std::function<double(double)>& cdf, double horizon) {
    KsResult res;
    res.effectiveN = static_cast<double>(total);
    if (total == 0) return res;
    std::sort(times.begin(), times.end());
    const double n = static_cast<double>(total);
    double d = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double f = cdf(times[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    // right edge: empirical CDF stays at m/n up to the censoring horizon
    d = std::max(d, std::abs(cdf(horizon) - static_cast<double>(times.size()) / n));
    res.statistic = d;
    res.pValue = ksPValue(d, n);
    return res;
}

KsResult ksTwoSample(std::vector<double> a, std::vector<double> b) {
    KsResult res;
    if (a.empty() || b.empty()) return res;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
    }
    res.effectiveN = na * nb / (na + nb);
    res.statistic = d;
    res.pValue = ksPValue(d, res.effectiveN);
    return res;
}

}  // namespace qnd

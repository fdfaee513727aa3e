#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qnd {

/// Fixed-order pairwise summation; deterministic regardless of worker count
/// as long as the input ordering is fixed.
double pairwiseSum(std::span<const double> xs);

double mean(std::span<const double> xs);

/// Unbiased sample variance (n-1 denominator); 0 for n < 2.
double sampleVariance(std::span<const double> xs);

double sampleStdDev(std::span<const double> xs);

/// log(sum(exp(xs))) with the usual max-shift; tolerates -inf entries.
double logSumExp(std::span<const double> xs);

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;
};

/// Ordinary least squares of y against t.
OlsFit olsFit(std::span<const double> t, std::span<const double> y);

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a).
double regularizedGammaQ(double a, double x);

/// Upper-tail p-value of the chi-square distribution.
double chiSquarePValue(double chi2, int dof);

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double pValue = 1.0;
};

/// Pearson chi-square with pooling of cells whose expected count falls
/// below minExpected. Observed and expected must have equal length.
ChiSquareResult pearsonChiSquare(const std::vector<double>& observed,
                                 const std::vector<double>& expected,
                                 double minExpected = 5.0);

struct KsResult {
    double statistic = 0.0;
    double pValue = 1.0;
    double effectiveN = 0.0;
};

/// Asymptotic Kolmogorov-Smirnov p-value for statistic d at effective
/// sample size nEff.
double ksPValue(double d, double nEff);

/// One-sample KS against cdf, censored at horizon: `times` holds the
/// observed event times <= horizon out of `total` trials; trials with no
/// event by the horizon contribute only through the empirical mass m/total
/// compared against cdf(horizon). The p-value uses the full-sample
/// asymptotic law, which is conservative under censoring.
KsResult ksOneSampleCensored(std::vector<double> times, std::size_t total,
                             const std::function<double(double)>& cdf,
                             double horizon);

/// Two-sample KS with the usual n1*n2/(n1+n2) effective size.
KsResult ksTwoSample(std::vector<double> a, std::vector<double> b);

}  // namespace qnd

#pragma once

// Small statistics toolbox: running moments, Wilson intervals, chi-square
// tests, normal tail, Fisher-z correlation intervals.  Every report row in
// the lab carries an uncertainty from here.

#include <cstdint>
#include <string>
#include <vector>

namespace sdla {

struct MeanSE {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;
};

class Accumulator {
 public:
  void add(double x) {
    n_++;
    double d = x - mean_;
    mean_ += d / double(n_);
    m2_ += d * (x - mean_);
  }
  long count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / double(n_ - 1) : 0.0; }
  double std_error() const;
  MeanSE result() const { return {mean(), std_error(), n_}; }

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct WilsonInterval {
  double p_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  long successes = 0;
  long trials = 0;
};

// 95% by default (z = 1.959964...).
WilsonInterval wilson(long successes, long trials, double z = 1.9599639845);

// Survival function of the standard normal.
double normal_sf(double z);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi2_sf(double x, int df);

struct Chi2Result {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Goodness-of-fit of observed counts against expected counts (same totals).
Chi2Result chi2_goodness(const std::vector<long>& observed,
                         const std::vector<double>& expected);

// Two-sample homogeneity test on category counts; cells with pooled expected
// count below min_expected are merged into the last kept cell.
Chi2Result chi2_two_sample(const std::vector<long>& a,
                           const std::vector<long>& b,
                           double min_expected = 5.0);

struct CorrelationCI {
  double r = 0.0;
  double lo = -1.0;
  double hi = 1.0;
  long n = 0;
};

// Pearson correlation with a Fisher-z 95% interval.
CorrelationCI correlation_ci(const std::vector<double>& x,
                             const std::vector<double>& y);

// Two-proportion z statistic with pooled standard error.
double two_proportion_z(long k1, long n1, long k2, long n2);

// FNV-1a 64-bit digest, used for run-record output integrity.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t file_digest(const std::string& path);

}  // namespace sdla

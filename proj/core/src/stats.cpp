#include "sdla/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "sdla/lattice.hpp"

namespace sdla {

double Accumulator::std_error() const {
  if (n_ < 2) return 0.0;
  return std::sqrt(variance() / double(n_));
}

WilsonInterval wilson(long k, long n, double z) {
  WilsonInterval w;
  w.successes = k;
  w.trials = n;
  if (n <= 0) return w;
  double p = double(k) / double(n);
  w.p_hat = p;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

namespace {

// Series expansion of P(a,x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) fail_pre("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_sf(double x, int df) {
  if (df <= 0) fail_pre("chi2_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return 1.0 - gamma_p(0.5 * df, 0.5 * x);
}

Chi2Result chi2_goodness(const std::vector<long>& observed,
                         const std::vector<double>& expected) {
  if (observed.size() != expected.size() || observed.empty())
    fail_pre("chi2_goodness: size mismatch");
  Chi2Result r;
  for (size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) fail_pre("chi2_goodness: nonpositive expected");
    double d = double(observed[i]) - expected[i];
    r.statistic += d * d / expected[i];
  }
  r.df = int(observed.size()) - 1;
  r.p_value = r.df > 0 ? chi2_sf(r.statistic, r.df) : 1.0;
  return r;
}

Chi2Result chi2_two_sample(const std::vector<long>& a,
                           const std::vector<long>& b, double min_expected) {
  if (a.size() != b.size() || a.empty())
    fail_pre("chi2_two_sample: size mismatch");
  long na = 0, nb = 0;
  for (long v : a) na += v;
  for (long v : b) nb += v;
  if (na == 0 || nb == 0) fail_pre("chi2_two_sample: empty sample");

  // Merge sparse cells so expected counts stay above min_expected.
  std::vector<long> ma, mb;
  long ca = 0, cb = 0;
  double total = double(na + nb);
  for (size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
    double pooled = double(ca + cb) / total;
    if (pooled * na >= min_expected && pooled * nb >= min_expected) {
      ma.push_back(ca);
      mb.push_back(cb);
      ca = cb = 0;
    }
  }
  if (ca + cb > 0) {
    if (ma.empty()) {
      ma.push_back(ca);
      mb.push_back(cb);
    } else {
      ma.back() += ca;
      mb.back() += cb;
    }
  }

  Chi2Result r;
  if (ma.size() < 2) {
    r.df = 0;
    return r;
  }
  for (size_t i = 0; i < ma.size(); ++i) {
    double p = double(ma[i] + mb[i]) / total;
    double ea = p * na, eb = p * nb;
    double da = double(ma[i]) - ea, db = double(mb[i]) - eb;
    r.statistic += da * da / ea + db * db / eb;
  }
  r.df = int(ma.size()) - 1;
  r.p_value = chi2_sf(r.statistic, r.df);
  return r;
}

CorrelationCI correlation_ci(const std::vector<double>& x,
                             const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 4)
    fail_pre("correlation_ci: need matched samples, n >= 4");
  long n = long(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  CorrelationCI c;
  c.n = n;
  if (sxx <= 0.0 || syy <= 0.0) {
    // Degenerate indicator (all equal): correlation undefined; report 0 with
    // the widest interval so trend checks treat it as inconclusive.
    return c;
  }
  c.r = sxy / std::sqrt(sxx * syy);
  double rc = std::clamp(c.r, -0.999999, 0.999999);
  double z = 0.5 * std::log((1.0 + rc) / (1.0 - rc));
  double se = 1.0 / std::sqrt(double(n - 3));
  double zlo = z - 1.9599639845 * se, zhi = z + 1.9599639845 * se;
  c.lo = std::tanh(zlo);
  c.hi = std::tanh(zhi);
  return c;
}

double two_proportion_z(long k1, long n1, long k2, long n2) {
  if (n1 <= 0 || n2 <= 0) fail_pre("two_proportion_z: empty sample");
  double p1 = double(k1) / n1, p2 = double(k2) / n2;
  double p = double(k1 + k2) / double(n1 + n2);
  double se = std::sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2));
  if (se == 0.0) return 0.0;
  return (p1 - p2) / se;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_pre("file_digest: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace sdla

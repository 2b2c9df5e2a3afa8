//
// Copyright 2026 The dpverify Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpverify/distributions.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpverify/error.h"

namespace dpverify {
namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxGammaIterations = 1000000;
constexpr int kMaxSeriesTerms = 100000;
constexpr int kMaxQuantileIterations = 200;
// Above this Poisson mean the mixture needs ~1e5 terms; switch to the
// Sankaran normal approximation, whose error is O(1/lambda) out there.
constexpr double kSeriesMaxMu = 1e7;

double Clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void CheckFinite(double v, const char* name) {
  if (!std::isfinite(v)) {
    Fail(ErrorCode::kInvalidArgument, std::string(name) + " must be finite");
  }
}

// y^a e^-y / Gamma(a + 1); the step between P(a, y) and P(a + 1, y).
double GammaStep(double a, double y) {
  return std::exp(a * std::log(y) - y - std::lgamma(a + 1.0));
}

struct NcEval {
  double cdf;
  double sf;
  double pdf;
};

NcEval SankaranApprox(double x, double k, double lambda) {
  const double kl = k + lambda;
  const double k2l = k + 2.0 * lambda;
  const double h = 1.0 - 2.0 * kl * (k + 3.0 * lambda) / (3.0 * k2l * k2l);
  const double pp = k2l / (kl * kl);
  const double m = (h - 1.0) * (1.0 - 3.0 * h);
  const double center = 1.0 + h * pp * (h - 1.0 - 0.5 * (2.0 - h) * m * pp);
  const double scale = h * std::sqrt(2.0 * pp) * (1.0 + 0.5 * m * pp);
  const double u = std::pow(x / kl, h);
  const double z = (u - center) / scale;
  const double dz = h * u / x / scale;
  return {0.5 * std::erfc(-z / std::sqrt(2.0)),
          0.5 * std::erfc(z / std::sqrt(2.0)),
          std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * dz};
}

NcEval EvaluateNc(double x, double k, double lambda) {
  CheckFinite(x, "x");
  CheckFinite(k, "k");
  CheckFinite(lambda, "lambda");
  Require(k > 0, "degrees of freedom must be positive");
  Require(lambda >= 0, "noncentrality must be nonnegative");
  if (x <= 0) return {0.0, 1.0, 0.0};

  const double y = 0.5 * x;
  const double mu = 0.5 * lambda;
  if (mu > kSeriesMaxMu) return SankaranApprox(x, k, lambda);
  const int j0 = static_cast<int>(std::floor(mu));
  const double a0 = 0.5 * k + j0;
  const double w0 =
      mu > 0 ? std::exp(-mu + j0 * std::log(mu) - std::lgamma(j0 + 1.0))
             : 1.0;
  const TailPair g0 = RegularizedGamma(a0, y);
  const double step0 = GammaStep(a0, y);

  // d/dx P(a, x/2) = 0.5 * GammaStep(a - 1, y) = 0.5 * GammaStep(a, y) * a / y.
  double cdf = w0 * g0.cdf;
  double sf = w0 * g0.sf;
  double pdf = w0 * step0 * a0 / y;
  if (mu == 0) return {Clamp01(cdf), Clamp01(sf), 0.5 * pdf};

  // Poisson mass beyond ~40 standard deviations is below kTiny.
  const double max_terms = kMaxSeriesTerms + 80.0 * std::sqrt(mu);
  int terms = 1;
  // Walk upwards from the mode. Q grows with a, so the sf update is a sum.
  {
    double w = w0, p = g0.cdf, q = g0.sf, step = step0, a = a0;
    for (int j = j0 + 1;; ++j) {
      w *= mu / j;
      p -= step;
      q += step;
      step *= y / (a + 1.0);
      a += 1.0;
      cdf += w * p;
      sf += w * q;
      pdf += w * step * a / y;
      if (++terms > max_terms) {
        Fail(ErrorCode::kNotConverged, "noncentral chi-square series cap");
      }
      // Remaining Poisson mass is below w * r / (1 - r), r = mu / (j + 1).
      const double r = mu / (j + 1.0);
      const double rest = r < 1 ? w * r / (1.0 - r) : 1.0;
      if (rest < kTiny ||
          (r < 1 && rest < kEps * std::min(std::max(cdf, kTiny),
                                           std::max(sf, kTiny)))) {
        break;
      }
    }
  }
  // Walk downwards. P grows as a shrinks, so here the cdf update is a sum.
  {
    double w = w0, p = g0.cdf, q = g0.sf, a = a0;
    double step_down = step0 * a0 / y;  // GammaStep(a0 - 1, y)
    for (int j = j0; j > 0; --j) {
      w *= j / mu;
      p += step_down;
      q -= step_down;
      a -= 1.0;
      cdf += w * std::max(p, 0.0);
      sf += w * std::max(q, 0.0);
      pdf += w * step_down * a / y;
      step_down *= a / y;
      if (++terms > max_terms) {
        Fail(ErrorCode::kNotConverged, "noncentral chi-square series cap");
      }
      const double r = (j - 1.0) / mu;
      const double rest = w * r / (1.0 - r);
      if (rest < kTiny ||
          rest < kEps * std::min(std::max(cdf, kTiny), std::max(sf, kTiny))) {
        break;
      }
    }
  }
  return {Clamp01(cdf), Clamp01(sf), 0.5 * pdf};
}

}  // namespace

TailPair RegularizedGamma(double a, double x) {
  CheckFinite(a, "a");
  Require(a > 0, "gamma shape must be positive");
  if (std::isnan(x)) Fail(ErrorCode::kInvalidArgument, "x is NaN");
  if (x <= 0) return {0.0, 1.0};
  if (std::isinf(x)) return {1.0, 0.0};

  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int n = 0;; ++n) {
      if (n == kMaxGammaIterations) {
        Fail(ErrorCode::kNotConverged, "incomplete gamma series");
      }
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    const double p = Clamp01(sum * std::exp(log_prefix));
    return {p, 1.0 - p};
  }
  // Modified Lentz on the continued fraction for Q.
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1;; ++i) {
    if (i == kMaxGammaIterations) {
      Fail(ErrorCode::kNotConverged, "incomplete gamma continued fraction");
    }
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  const double q = Clamp01(std::exp(log_prefix) * h);
  return {1.0 - q, q};
}

double RegularizedGammaP(double a, double x) {
  return RegularizedGamma(a, x).cdf;
}

double RegularizedGammaQ(double a, double x) {
  return RegularizedGamma(a, x).sf;
}

double GammaCdf(double x, double shape, double rate) {
  Require(rate > 0, "gamma rate must be positive");
  return RegularizedGammaP(shape, rate * x);
}

double ExpCdf(double x, double rate) {
  Require(rate > 0, "exponential rate must be positive");
  if (x <= 0) return 0.0;
  return -std::expm1(-rate * x);
}

double NormalCdf(double x, double mean, double variance) {
  Require(variance >= 0, "variance must be nonnegative");
  if (variance == 0) return x < mean ? 0.0 : 1.0;
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * variance));
}

double Chi2Cdf(double x, double k) { return NcChi2(x, k, 0.0).cdf; }
double Chi2Sf(double x, double k) { return NcChi2(x, k, 0.0).sf; }

double Chi2Quantile(double upper_tail, double k) {
  return NcChi2Quantile(upper_tail, k, 0.0);
}

TailPair NcChi2(double x, double k, double lambda) {
  const NcEval e = EvaluateNc(x, k, lambda);
  return {e.cdf, e.sf};
}

double NcChi2Cdf(double x, double k, double lambda) {
  return EvaluateNc(x, k, lambda).cdf;
}

double NcChi2Sf(double x, double k, double lambda) {
  return EvaluateNc(x, k, lambda).sf;
}

double NcChi2Pdf(double x, double k, double lambda) {
  return EvaluateNc(x, k, lambda).pdf;
}

double NcChi2Quantile(double upper_tail, double k, double lambda) {
  Require(upper_tail > 0 && upper_tail < 1,
          "upper tail probability must lie in (0, 1)");
  CheckFinite(lambda, "lambda");
  const double log_target = std::log(upper_tail);

  // Bracket: sf(lo) > upper_tail >= sf(hi).
  double lo = 0.0;
  double hi = k + lambda + 10.0 * std::sqrt(2.0 * (k + 2.0 * lambda)) + 10.0;
  while (EvaluateNc(hi, k, lambda).sf > upper_tail) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) {
      Fail(ErrorCode::kNotConverged, "quantile bracket overflow");
    }
  }

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxQuantileIterations; ++it) {
    const NcEval e = EvaluateNc(x, k, lambda);
    if (e.sf > upper_tail) {
      lo = x;
    } else {
      hi = x;
    }
    if (std::fabs(e.sf - upper_tail) <= 1e-13 * upper_tail ||
        hi - lo <= 1e-15 * std::max(1.0, hi)) {
      return x;
    }
    // Newton on log sf: d/dx log sf = -pdf / sf.
    double next = 0.5 * (lo + hi);
    if (e.sf > 0 && e.pdf > 0) {
      const double candidate =
          x + (std::log(e.sf) - log_target) * e.sf / e.pdf;
      if (candidate > lo && candidate < hi) next = candidate;
    }
    x = next;
  }
  Fail(ErrorCode::kNotConverged, "noncentral chi-square quantile");
}

}  // namespace dpverify

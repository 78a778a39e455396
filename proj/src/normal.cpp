// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/normal.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fedproj::normal {

double pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double half_mass(double a) { return 0.5 * std::erf(a / std::numbers::sqrt2); }

namespace {

// AS 241 tail regions; tail_p = min(p, 1 - p) > 0.
inline double ppf_tail(double tail_p) {
  double r = std::sqrt(-std::log(tail_p));
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
              0.24178072517745061177) * r + 1.27045825245236838258) * r +
            3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
              0.0151986665636164571966) * r + 0.14810397642748007459) * r +
            0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
    return num / den;
  }
  r -= 5.0;
  const double num =
      (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
            0.0012426609473880784386) * r + 0.026532189526576123093) * r +
          0.29656057182850489123) * r + 1.7848265399172913358) * r +
        5.4637849111641143699) * r + 6.6579046435011037772);
  const double den =
      (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
            1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
          0.0148753612908506148525) * r + 0.13692988092273580531) * r +
        0.59983220655588793769) * r + 1.0);
  return num / den;
}

}  // namespace

double ppf_centered(double q) {
  if (std::fabs(q) <= 0.425) return detail::ppf_central(q);
  if (!(std::fabs(q) < 0.5)) {
    if (std::isnan(q)) return q;
    return q > 0 ? std::numeric_limits<double>::infinity()
                 : -std::numeric_limits<double>::infinity();
  }
  const double tail_p = 0.5 - std::fabs(q);
  const double x = ppf_tail(tail_p);
  return q < 0 ? -x : x;
}

double ppf(double p) {
  if (p <= 0.0 || p >= 1.0 || std::isnan(p)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) return detail::ppf_central(q);
  const double x = ppf_tail(q < 0 ? p : 1.0 - p);
  return q < 0 ? -x : x;
}

}  // namespace fedproj::normal

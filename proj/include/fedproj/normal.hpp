// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace fedproj::normal {

// Standard normal density.
double pdf(double x);

// Standard normal CDF, via erfc so the lower tail keeps relative accuracy.
double cdf(double x);

// Inverse CDF (Wichura's AS 241, relative error ~1e-16). p in (0, 1).
double ppf(double p);

// Inverse CDF parameterised by q = p - 0.5, which keeps full precision for
// probabilities close to one half. q in (-0.5, 0.5).
double ppf_centered(double q);

// Phi(a) - 1/2 for a >= 0, i.e. the probability mass of [0, a].
double half_mass(double a);

namespace detail {

// AS 241 (PPND16) central region, |q| <= 0.425.
inline double ppf_central(double q) {
  const double r = 0.180625 - q * q;
  const double num =
      ((((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
             67265.770927008700853) * r + 45921.953931549871457) * r +
           13731.693765509461125) * r + 1971.5909503065514427) * r +
         133.14166789178437745) * r + 3.387132872796366608));
  const double den =
      ((((((((5226.495278852545925 * r + 28729.085735721942674) * r +
             39307.89580009271061) * r + 21213.794301586595867) * r +
           5394.1960214247511077) * r + 687.1870074920579083) * r +
         42.313330701600911252) * r + 1.0));
  return q * num / den;
}

}  // namespace detail

}  // namespace fedproj::normal

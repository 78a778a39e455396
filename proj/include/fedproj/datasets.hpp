// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Dataset files and synthetic generators. File formats are documented in
// docs/DATA.md.

#pragma once

#include <cstddef>
#include <string>

#include "fedproj/models.hpp"

namespace fedproj {

// Columnar CSV: features..., target per row. A first row whose first field
// is not numeric is treated as a header. Throws kIo with the line number.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& data);

// "FPDS" | version u32 (=1) | rows u64 | features u32 | rows x (features + 1)
// little-endian f64 values, target last.
Dataset load_binary(const std::string& path);
void save_binary(const std::string& path, const Dataset& data);

// Dispatches on extension: .csv, otherwise binary.
Dataset load_dataset(const std::string& path);

// y = w*.x + b* + noise * N(0,1), x ~ N(0, I); w* ~ N(0, 1/input_dim).
Dataset make_linear_regression(std::size_t n, std::size_t input_dim,
                               double noise, RandomSeed seed);

// Gaussian blobs: class c centered at separation * u_c for a random unit
// vector u_c, unit isotropic noise. Labels uniform.
Dataset make_blobs(std::size_t n, std::size_t input_dim, std::size_t classes,
                   double separation, RandomSeed seed);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Seeded shuffle, then the last round(test_fraction * n) rows are the test set.
TrainTest train_test_split(const Dataset& data, double test_fraction,
                           RandomSeed seed);

}  // namespace fedproj

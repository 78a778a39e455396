// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/datasets.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fedproj/error.hpp"
#include "fedproj/wire.hpp"

namespace fedproj {

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

std::string io_where(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

void shuffle(Dataset& data, prng::SplitMix64& rng) {
  for (std::size_t i = data.size(); i > 1; --i) {
    std::swap(data[i - 1], data[rng.below(i)]);
  }
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  Dataset out;
  std::string line;
  std::size_t lineno = 0, width = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    row.clear();
    std::string_view rest(line);
    bool ok = true;
    while (true) {
      const auto comma = rest.find(',');
      double v;
      if (!parse_double(rest.substr(0, comma), v)) {
        ok = false;
        break;
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!ok) {
      if (out.empty() && width == 0 && lineno == 1) continue;  // header
      throw Error(ErrorCode::kIo, io_where(path, lineno) + ": not a number");
    }
    if (row.size() < 2) throw Error(ErrorCode::kIo, io_where(path, lineno) + ": need features and a target");
    if (width == 0) width = row.size();
    if (row.size() != width) throw Error(ErrorCode::kIo, io_where(path, lineno) + ": ragged row");
    Example ex;
    ex.target = row.back();
    row.pop_back();
    ex.features = row;
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw Error(ErrorCode::kIo, path + ": no rows");
  return out;
}

void save_csv(const std::string& path, const Dataset& data) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const Example& ex : data) {
    for (double x : ex.features) std::fprintf(f, "%.17g,", x);
    std::fprintf(f, "%.17g\n", ex.target);
  }
  if (std::fclose(f) != 0) throw Error(ErrorCode::kIo, "cannot write " + path);
}

Dataset load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    ByteReader r(bytes);
    const std::string magic{static_cast<char>(r.u8()), static_cast<char>(r.u8()),
                            static_cast<char>(r.u8()), static_cast<char>(r.u8())};
    if (magic != "FPDS") throw Error(ErrorCode::kIo, path + ": bad magic");
    if (r.u32() != 1) throw Error(ErrorCode::kIo, path + ": unsupported version");
    const std::uint64_t rows = r.u64();
    const std::uint32_t width = r.u32();
    if (rows == 0 || rows > r.remaining() / 8 / (std::uint64_t{width} + 1)) {
      throw Error(ErrorCode::kIo, path + ": row count does not match file size");
    }
    Dataset out(rows);
    for (Example& ex : out) {
      ex.features.resize(width);
      for (double& x : ex.features) x = r.f64();
      ex.target = r.f64();
    }
    r.expect_end();
    return out;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    throw Error(ErrorCode::kIo, path + ": " + e.what());
  }
}

void save_binary(const std::string& path, const Dataset& data) {
  ByteWriter w;
  for (char c : std::string("FPDS")) w.u8(static_cast<std::uint8_t>(c));
  w.u32(1);
  w.u64(data.size());
  const std::size_t width = data.empty() ? 0 : data[0].features.size();
  w.u32(static_cast<std::uint32_t>(width));
  for (const Example& ex : data) {
    if (ex.features.size() != width) throw Error(ErrorCode::kShape, "ragged dataset");
    for (double x : ex.features) w.f64(x);
    w.f64(ex.target);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
}

Dataset load_dataset(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return load_csv(path);
  return load_binary(path);
}

Dataset make_linear_regression(std::size_t n, std::size_t input_dim,
                               double noise, RandomSeed seed) {
  prng::SplitMix64 rng(derive_subseed(seed, 0, 0, 0, 0).value);
  std::vector<double> w_star(input_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& x : w_star) x = rng.normal() * scale;
  const double b_star = rng.normal();
  Dataset out(n);
  for (Example& ex : out) {
    ex.features.resize(input_dim);
    double y = b_star;
    for (std::size_t i = 0; i < input_dim; ++i) {
      ex.features[i] = rng.normal();
      y += w_star[i] * ex.features[i];
    }
    ex.target = y + noise * rng.normal();
  }
  return out;
}

Dataset make_blobs(std::size_t n, std::size_t input_dim, std::size_t classes,
                   double separation, RandomSeed seed) {
  if (classes < 2) throw Error(ErrorCode::kInvalidDimension, "need >= 2 classes");
  prng::SplitMix64 rng(derive_subseed(seed, 0, 0, 1, 0).value);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(input_dim));
  for (auto& c : centers) {
    double norm = 0.0;
    for (double& x : c) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : c) x *= separation / norm;
  }
  Dataset out(n);
  for (Example& ex : out) {
    const std::size_t label = rng.below(classes);
    ex.target = static_cast<double>(label);
    ex.features.resize(input_dim);
    for (std::size_t i = 0; i < input_dim; ++i) ex.features[i] = centers[label][i] + rng.normal();
  }
  return out;
}

TrainTest train_test_split(const Dataset& data, double test_fraction,
                           RandomSeed seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "test fraction must be in [0, 1)");
  }
  Dataset all = data;
  prng::SplitMix64 rng(derive_subseed(seed, 0, 0, 2, 0).value);
  shuffle(all, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));
  TrainTest out;
  out.train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_test));
  out.test.assign(all.end() - static_cast<std::ptrdiff_t>(n_test), all.end());
  return out;
}

}  // namespace fedproj

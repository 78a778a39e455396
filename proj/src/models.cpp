// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/models.hpp"

#include <algorithm>
#include <cmath>

#include "fedproj/error.hpp"

namespace fedproj {

std::size_t ParamLayout::dim() const {
  return groups.empty() ? 0 : groups.back().offset + groups.back().size;
}

std::vector<std::size_t> ParamLayout::group_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& g : groups) out.push_back(g.size);
  return out;
}

void ParamLayout::validate() const {
  std::size_t next = 0;
  for (const auto& g : groups) {
    if (g.size == 0 || g.offset != next) {
      throw Error(ErrorCode::kShape, "parameter group " + g.name + " is not contiguous");
    }
    next += g.size;
  }
  if (next == 0) throw Error(ErrorCode::kShape, "empty parameter layout");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinearRegression: return "linear-regression";
    case ModelKind::kLogisticRegression: return "logistic-regression";
    case ModelKind::kMlp: return "mlp";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::kLinearRegression, ModelKind::kLogisticRegression,
                      ModelKind::kMlp}) {
    if (name == model_kind_name(k)) return k;
  }
  throw Error(ErrorCode::kConfig, "unknown model kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw Error(ErrorCode::kInvalidDimension, "input_dim must be >= 1");
  switch (kind) {
    case ModelKind::kLinearRegression:
      if (output_dim != 1) throw Error(ErrorCode::kInvalidDimension, "linear regression has output_dim 1");
      break;
    case ModelKind::kMlp:
      if (hidden_dim == 0) throw Error(ErrorCode::kInvalidDimension, "mlp needs hidden_dim >= 1");
      [[fallthrough]];
    case ModelKind::kLogisticRegression:
      if (output_dim < 2) throw Error(ErrorCode::kInvalidDimension, "classifiers need >= 2 classes");
      break;
  }
}

ParamLayout ModelSpec::layout() const {
  validate();
  ParamLayout out;
  std::size_t off = 0;
  auto add = [&](const char* name, std::size_t size, std::size_t fan_in) {
    out.groups.push_back(ParamGroup{name, off, size, fan_in});
    off += size;
  };
  switch (kind) {
    case ModelKind::kLinearRegression:
      add("weight", input_dim, input_dim);
      add("bias", 1, 0);
      break;
    case ModelKind::kLogisticRegression:
      add("weight", output_dim * input_dim, input_dim);
      add("bias", output_dim, 0);
      break;
    case ModelKind::kMlp:
      add("hidden.weight", hidden_dim * input_dim, input_dim);
      add("hidden.bias", hidden_dim, 0);
      add("out.weight", output_dim * hidden_dim, hidden_dim);
      add("out.bias", output_dim, 0);
      break;
  }
  return out;
}

std::vector<double> init_params(const ModelSpec& spec) {
  const ParamLayout layout = spec.layout();
  std::vector<double> w(layout.dim(), 0.0);
  const TruncatedNormalSampler sampler(2.0);
  for (std::size_t gi = 0; gi < layout.groups.size(); ++gi) {
    const ParamGroup& g = layout.groups[gi];
    if (g.fan_in == 0) continue;
    std::span<double> dst(w.data() + g.offset, g.size);
    sampler.fill(derive_subseed(spec.init_seed, 0, 0, gi, 0), dst);
    const double scale = 1.0 / std::sqrt(static_cast<double>(g.fan_in));
    for (double& x : dst) x *= scale;
  }
  return w;
}

namespace {

void check_inputs(const ModelSpec& spec, std::span<const double> w,
                  std::span<const Example> batch) {
  if (batch.empty()) throw Error(ErrorCode::kShape, "empty batch");
  if (w.size() != spec.num_params()) {
    throw Error(ErrorCode::kShape, "parameter length " + std::to_string(w.size()) +
                                       " != model dimension " +
                                       std::to_string(spec.num_params()));
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    if (ex.features.size() != spec.input_dim) {
      throw Error(ErrorCode::kShape, "example " + std::to_string(i) + " has " +
                                         std::to_string(ex.features.size()) + " features");
    }
    if (!std::isfinite(ex.target)) throw NumericError(i, "non-finite target");
    for (double x : ex.features) {
      if (!std::isfinite(x)) throw NumericError(i, "non-finite feature");
    }
    if (spec.is_classifier()) {
      const double c = ex.target;
      if (c < 0 || c >= static_cast<double>(spec.output_dim) || c != std::floor(c)) {
        throw Error(ErrorCode::kShape, "example " + std::to_string(i) + " has invalid class");
      }
    }
  }
}

// z <- logits, returns -log softmax(z)[label] and overwrites z with
// softmax(z) - onehot(label).
double softmax_xent(std::span<double> z, std::size_t label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  const double loss = std::log(sum) - std::log(z[label]);
  for (double& v : z) v /= sum;
  z[label] -= 1.0;
  return loss;
}

// Row-major matrix-vector product out = M x + b.
void affine(const double* m, const double* b, std::span<const double> x,
            std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = b[r];
    const double* row = m + r * n;
    for (std::size_t c = 0; c < n; ++c) s += row[c] * x[c];
    out[r] = s;
  }
}

// g_m += dz x^T, g_b += dz (g may be empty: loss only).
void affine_backward(std::span<const double> dz, std::span<const double> x,
                     double* gm, double* gb) {
  const std::size_t n = x.size();
  for (std::size_t r = 0; r < dz.size(); ++r) {
    double* row = gm + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += dz[r] * x[c];
    gb[r] += dz[r];
  }
}

// Per-example kernels; g empty means loss only.
double linear_example(const ModelSpec& spec, std::span<const double> w,
                      const Example& ex, std::span<double> g) {
  const std::size_t n = spec.input_dim;
  double pred = w[n];
  for (std::size_t i = 0; i < n; ++i) pred += w[i] * ex.features[i];
  const double r = pred - ex.target;
  if (!g.empty()) {
    for (std::size_t i = 0; i < n; ++i) g[i] += r * ex.features[i];
    g[n] += r;
  }
  return 0.5 * r * r;
}

double logistic_example(const ModelSpec& spec, std::span<const double> w,
                        const Example& ex, std::span<double> g,
                        std::vector<double>& z) {
  const std::size_t n = spec.input_dim, c = spec.output_dim;
  z.resize(c);
  affine(w.data(), w.data() + c * n, ex.features, z);
  const double l = softmax_xent(z, static_cast<std::size_t>(ex.target));
  if (!g.empty()) affine_backward(z, ex.features, g.data(), g.data() + c * n);
  return l;
}

double mlp_example(const ModelSpec& spec, std::span<const double> w,
                   const Example& ex, std::span<double> g,
                   std::vector<double>& a, std::vector<double>& z,
                   std::vector<double>& da) {
  const std::size_t n = spec.input_dim, h = spec.hidden_dim, c = spec.output_dim;
  const std::size_t ob1 = h * n, ow2 = ob1 + h, ob2 = ow2 + c * h;
  a.resize(h);
  z.resize(c);
  affine(w.data(), w.data() + ob1, ex.features, a);
  for (double& v : a) v = std::tanh(v);
  affine(w.data() + ow2, w.data() + ob2, a, z);
  const double l = softmax_xent(z, static_cast<std::size_t>(ex.target));
  if (!g.empty()) {
    affine_backward(z, a, g.data() + ow2, g.data() + ob2);
    da.assign(h, 0.0);
    for (std::size_t r = 0; r < c; ++r) {
      const double* row = w.data() + ow2 + r * h;
      for (std::size_t j = 0; j < h; ++j) da[j] += row[j] * z[r];
    }
    for (std::size_t j = 0; j < h; ++j) da[j] *= 1.0 - a[j] * a[j];
    affine_backward(da, ex.features, g.data(), g.data() + ob1);
  }
  return l;
}

double evaluate(const ModelSpec& spec, std::span<const double> w,
                std::span<const Example> batch, std::span<double> g) {
  check_inputs(spec, w, batch);
  if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
  std::vector<double> a, z, da;
  double total = 0.0;
  for (const Example& ex : batch) {
    switch (spec.kind) {
      case ModelKind::kLinearRegression: total += linear_example(spec, w, ex, g); break;
      case ModelKind::kLogisticRegression: total += logistic_example(spec, w, ex, g, z); break;
      case ModelKind::kMlp: total += mlp_example(spec, w, ex, g, a, z, da); break;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& v : g) v *= inv_n;
  return total * inv_n;
}

}  // namespace

double loss(const ModelSpec& spec, std::span<const double> w,
            std::span<const Example> batch) {
  return evaluate(spec, w, batch, {});
}

std::vector<double> grad(const ModelSpec& spec, std::span<const double> w,
                         std::span<const Example> batch) {
  std::vector<double> g(w.size());
  loss_and_grad(spec, w, batch, g);
  return g;
}

double loss_and_grad(const ModelSpec& spec, std::span<const double> w,
                     std::span<const Example> batch, std::span<double> g) {
  if (g.size() != w.size()) throw Error(ErrorCode::kShape, "gradient buffer size");
  return evaluate(spec, w, batch, g);
}

double eval_metric(const ModelSpec& spec, std::span<const double> w,
                   std::span<const Example> batch) {
  if (!spec.is_classifier()) return 2.0 * loss(spec, w, batch);
  check_inputs(spec, w, batch);
  const std::size_t n = spec.input_dim, c = spec.output_dim, h = spec.hidden_dim;
  std::vector<double> a(h), z(c);
  std::size_t correct = 0;
  for (const Example& ex : batch) {
    if (spec.kind == ModelKind::kLogisticRegression) {
      affine(w.data(), w.data() + c * n, ex.features, z);
    } else {
      affine(w.data(), w.data() + h * n, ex.features, a);
      for (double& v : a) v = std::tanh(v);
      const std::size_t ow2 = h * n + h;
      affine(w.data() + ow2, w.data() + ow2 + c * h, a, z);
    }
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == static_cast<std::size_t>(ex.target)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

const char* optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& name) {
  for (OptimizerKind k : {OptimizerKind::kSgd, OptimizerKind::kMomentum, OptimizerKind::kAdam}) {
    if (name == optimizer_name(k)) return k;
  }
  throw Error(ErrorCode::kConfig, "unknown optimizer '" + name + "'");
}

void LocalConfig::validate() const {
  if (iters == 0) throw Error(ErrorCode::kConfig, "local iterations must be >= 1");
  if (accum == 0) throw Error(ErrorCode::kConfig, "accum must be >= 1");
  if (!std::isfinite(lr) || lr < 0) throw Error(ErrorCode::kConfig, "learning rate must be finite and >= 0");
}

Dataset sample_batch(std::span<const Example> data, std::size_t batch_size,
                     prng::SplitMix64& rng) {
  if (batch_size == 0 || batch_size >= data.size()) return Dataset(data.begin(), data.end());
  Dataset out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(data[rng.below(data.size())]);
  return out;
}

LocalResult local_sgd(const ModelSpec& spec, std::span<const double> w,
                      std::span<const Example> data, const LocalConfig& cfg,
                      RandomSeed rng_seed) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::kShape, "empty client dataset");
  const std::size_t d = w.size();
  LocalResult out;
  out.w.assign(w.begin(), w.end());
  out.delta.assign(d, 0.0);
  prng::SplitMix64 rng(rng_seed.value);
  std::vector<double> g(d), g_hat(d), m(d, 0.0), v(d, 0.0);
  const bool whole = cfg.batch_size == 0 || cfg.batch_size >= data.size();
  const double inv_accum = 1.0 / static_cast<double>(cfg.accum);

  for (std::size_t t = 0; t < cfg.iters; ++t) {
    std::fill(g_hat.begin(), g_hat.end(), 0.0);
    for (std::size_t a = 0; a < cfg.accum; ++a) {
      double l;
      if (whole) {
        l = loss_and_grad(spec, out.w, data, g);
      } else {
        const Dataset batch = sample_batch(data, cfg.batch_size, rng);
        l = loss_and_grad(spec, out.w, batch, g);
      }
      ++out.grad_evals;
      if (!std::isfinite(l)) throw DivergedError(t, "non-finite local loss");
      if (cfg.accum == 1) {
        g_hat.swap(g);
      } else {
        for (std::size_t i = 0; i < d; ++i) g_hat[i] += g[i] * inv_accum;
      }
    }
    for (double x : g_hat) {
      if (!std::isfinite(x)) throw DivergedError(t, "non-finite local gradient");
    }

    switch (cfg.optimizer) {
      case OptimizerKind::kSgd:
        break;
      case OptimizerKind::kMomentum:
        for (std::size_t i = 0; i < d; ++i) {
          m[i] = cfg.momentum * m[i] + g_hat[i];
          g_hat[i] = m[i];
        }
        break;
      case OptimizerKind::kAdam: {
        const double tt = static_cast<double>(t + 1);
        const double c1 = 1.0 - std::pow(cfg.beta1, tt);
        const double c2 = 1.0 - std::pow(cfg.beta2, tt);
        for (std::size_t i = 0; i < d; ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g_hat[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g_hat[i] * g_hat[i];
          g_hat[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
        }
        break;
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double step = cfg.lr * g_hat[i];
      out.w[i] -= step;
      out.delta[i] += step;
    }
  }
  return out;
}

}  // namespace fedproj

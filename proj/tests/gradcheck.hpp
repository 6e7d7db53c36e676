#pragma once

// Central finite-difference gradient checking and random tensor helpers
// shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "usspine/autograd.hpp"
#include "usspine/rng.hpp"

namespace usspine::testing {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero so ReLU kinks sit far from +-h.
inline Tensor kink_free_tensor(Shape shape, Rng& rng, double margin = 1e-2) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

/// Distinct values, pairwise at least 1/size apart, so every max-pool
/// window has a unique winner under perturbation.
inline Tensor distinct_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<double> values(t.size());
  std::iota(values.begin(), values.end(), 0.0);
  for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[rng.below(i)]);
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = 2.0 * values[i] / n - 1.0;
  return t;
}

/// Scalar loss from a builder's output: itself when it has one element,
/// otherwise a fixed random projection so every output entry matters.
inline Var scalarize(Tape& tape, Var out, std::uint64_t seed) {
  const Tensor& value = tape.value(out);
  if (value.size() == 1) return out;
  Rng rng(seed);
  return ops::dot_const(tape, out, random_tensor(value.shape(), rng));
}

struct GradError {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over
/// every input element, with numeric from central differences of step h.
inline GradError check_gradients(const Builder& build, const std::vector<Tensor>& inputs, std::uint64_t seed,
                                 double h = 1e-5, double floor = 1e-3) {
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return tape.value(scalarize(tape, build(tape, vars), seed))[0];
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  tape.backward(scalarize(tape, build(tape, vars), seed));

  GradError err;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = tape.grad(vars[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      probe[i][j] = inputs[i][j] + h;
      const double up = evaluate(probe);
      probe[i][j] = inputs[i][j] - h;
      const double down = evaluate(probe);
      probe[i][j] = inputs[i][j];
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[j];
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      err.max_rel = std::max(err.max_rel, std::abs(a - numeric) / scale);
      ++err.checked;
    }
  }
  return err;
}

struct PrimitiveCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  Builder build;
};

/// One entry per differentiable primitive, each drawing small random inputs.
inline std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> cases;
  cases.push_back({"conv2d 3x3 s1 p1",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({2, 3, 5, 5}, r), random_tensor({4, 3, 3, 3}, r),
                                                random_tensor({4}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 1); }});
  cases.push_back({"conv2d 3x3 s2 p1",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({1, 2, 6, 7}, r), random_tensor({3, 2, 3, 3}, r),
                                                random_tensor({3}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], 2, 1); }});
  cases.push_back({"conv2d 1x1",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({2, 4, 3, 3}, r), random_tensor({2, 4, 1, 1}, r),
                                                random_tensor({2}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 0); }});
  cases.push_back({"maxpool2", [](Rng& r) { return std::vector<Tensor>{distinct_tensor({2, 2, 6, 4}, r)}; },
                   [](Tape& t, const std::vector<Var>& v) { return ops::maxpool2(t, v[0]); }});
  cases.push_back({"upsample_nearest2", [](Rng& r) { return std::vector<Tensor>{random_tensor({1, 3, 3, 4}, r)}; },
                   [](Tape& t, const std::vector<Var>& v) { return ops::upsample_nearest2(t, v[0]); }});
  cases.push_back({"relu", [](Rng& r) { return std::vector<Tensor>{kink_free_tensor({2, 2, 4, 4}, r)}; },
                   [](Tape& t, const std::vector<Var>& v) { return ops::relu(t, v[0]); }});
  cases.push_back({"add",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({1, 2, 3, 3}, r), random_tensor({1, 2, 3, 3}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::add(t, v[0], v[1]); }});
  cases.push_back({"mse_loss",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({1, 2, 4, 4}, r), random_tensor({1, 2, 4, 4}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::mse_loss(t, v[0], v[1]); }});
  cases.push_back({"sum", [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3, 2, 2}, r)}; },
                   [](Tape& t, const std::vector<Var>& v) { return ops::sum(t, v[0]); }});
  cases.push_back({"channel_norm",
                   [](Rng& r) {
                     return std::vector<Tensor>{random_tensor({2, 3, 3, 3}, r), random_tensor({3}, r, 0.5, 1.5),
                                                random_tensor({3}, r)};
                   },
                   [](Tape& t, const std::vector<Var>& v) { return ops::channel_norm(t, v[0], v[1], v[2]); }});
  return cases;
}

}  // namespace usspine::testing

#pragma once

// Central finite-difference gradient checker. Lives in test code only; the
// forward evaluations it differences are the only library calls it makes, so
// it stays independent of the backward implementation it validates.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pvckit/autodiff.hpp"
#include "pvckit/rng.hpp"

namespace gradcheck {

using pvckit::Shape;
using pvckit::Tape;
using pvckit::Tensor;
using pvckit::Var;

// Builds a scalar loss from watched leaves. Called repeatedly with perturbed
// leaf values, so it must be a pure function of them.
using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Result {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

inline double loss_value(const std::vector<Tensor>& inputs, const BuildFn& f) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().value();
}

// Compares analytic gradients against (f(x+h)-f(x-h))/2h element-wise.
// Relative error uses max(|analytic|, |numeric|, 1e-3) as the denominator so
// near-zero gradients are compared absolutely at a tight tolerance.
inline Result check(std::vector<Tensor> inputs, const BuildFn& f, double h = 1e-5) {
  Result res;
  Tape tape(true);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.watch(t.clone()));
  Var loss = f(tape, vars);
  pvckit::Gradients grads = tape.backward(loss);

  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = grads.at(vars[i]);
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i].data()[j];
      inputs[i].data()[j] = orig + h;
      const double lp = loss_value(inputs, f);
      inputs[i].data()[j] = orig - h;
      const double lm = loss_value(inputs, f);
      inputs[i].data()[j] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic.data()[j];
      const double den = std::max({std::fabs(fd), std::fabs(an), 1e-3});
      res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd - an) / den);
      ++res.checked;
    }
  }
  return res;
}

// Same, but only a deterministic subsample of elements per input (for large
// parameter sets such as whole networks).
inline Result check_sampled(std::vector<Tensor> inputs, const BuildFn& f, int64_t per_input,
                            uint64_t seed, double h = 1e-5) {
  Result res;
  Tape tape(true);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.watch(t.clone()));
  Var loss = f(tape, vars);
  pvckit::Gradients grads = tape.backward(loss);

  pvckit::Rng rng(seed);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = grads.at(vars[i]);
    const int64_t n = inputs[i].size();
    std::vector<int64_t> picks;
    if (n <= per_input) {
      for (int64_t j = 0; j < n; ++j) picks.push_back(j);
    } else {
      for (int64_t j = 0; j < per_input; ++j) picks.push_back(rng.uniform_int(n));
    }
    for (int64_t j : picks) {
      const double orig = inputs[i].data()[j];
      inputs[i].data()[j] = orig + h;
      const double lp = loss_value(inputs, f);
      inputs[i].data()[j] = orig - h;
      const double lm = loss_value(inputs, f);
      inputs[i].data()[j] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic.data()[j];
      const double den = std::max({std::fabs(fd), std::fabs(an), 1e-3});
      res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd - an) / den);
      ++res.checked;
    }
  }
  return res;
}

// Sampled check for deep ReLU compositions. Central differences are only
// valid where the loss is smooth across [x-h, x+h]; an element whose FD
// disagrees between step h and h/2 has a kink inside the interval and is
// skipped. Reports how many elements survived the filter.
struct FilteredResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped_nonsmooth = 0;
};

inline FilteredResult check_sampled_filtered(std::vector<Tensor> inputs, const BuildFn& f,
                                             int64_t per_input, uint64_t seed, double h = 1e-5) {
  FilteredResult res;
  Tape tape(true);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.watch(t.clone()));
  Var loss = f(tape, vars);
  pvckit::Gradients grads = tape.backward(loss);

  pvckit::Rng rng(seed);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = grads.at(vars[i]);
    const int64_t n = inputs[i].size();
    std::vector<int64_t> picks;
    if (n <= per_input) {
      for (int64_t j = 0; j < n; ++j) picks.push_back(j);
    } else {
      for (int64_t j = 0; j < per_input; ++j) picks.push_back(rng.uniform_int(n));
    }
    for (int64_t j : picks) {
      const double orig = inputs[i].data()[j];
      auto at = [&](double v) {
        inputs[i].data()[j] = v;
        const double r = loss_value(inputs, f);
        inputs[i].data()[j] = orig;
        return r;
      };
      const double fd1 = (at(orig + h) - at(orig - h)) / (2.0 * h);
      const double fd2 = (at(orig + h / 2) - at(orig - h / 2)) / h;
      const double fd_den = std::max({std::fabs(fd1), std::fabs(fd2), 1e-3});
      if (std::fabs(fd1 - fd2) / fd_den > 1e-5) {
        ++res.skipped_nonsmooth;
        continue;
      }
      const double an = analytic.data()[j];
      const double den = std::max({std::fabs(fd1), std::fabs(an), 1e-3});
      res.max_rel_err = std::max(res.max_rel_err, std::fabs(fd1 - an) / den);
      ++res.checked;
    }
  }
  return res;
}

// scalar probe: sum(out * w) with fixed random weights, exercising every
// output element of an op under test
inline Var probe(Tape& tape, Var out, uint64_t seed) {
  pvckit::Rng rng(seed);
  Tensor w(out.shape());
  for (int64_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
  return pvckit::sum(pvckit::mul(out, tape.constant(std::move(w))));
}

}  // namespace gradcheck

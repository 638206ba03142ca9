#pragma once

// Central finite differences against the tape, test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gdp/autograd/tensor.hpp"

namespace gdp::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
};

// |a - f| / max(|a|, |f|, floor)
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double numeric_derivative(const std::function<double()>& loss, double& slot, double eps) {
  const double saved = slot;
  slot = saved + eps;
  const double up = loss();
  slot = saved - eps;
  const double down = loss();
  slot = saved;
  return (up - down) / (2.0 * eps);
}

// Compares d(loss)/d(param) for every entry of each parameter. build() must
// rebuild the graph from the current parameter values and return the loss.
inline GradCheckResult grad_check(const std::function<ag::Var()>& build, std::vector<ag::Var> params,
                                  double eps = 1e-6) {
  for (auto& p : params) p.zero_grad();
  ag::Var loss = build();
  ag::backward(loss);
  std::vector<ag::Tensor> analytic;
  for (auto& p : params) analytic.push_back(p.grad());
  GradCheckResult result;
  auto eval = [&] { return build().item(); };
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].value().size(); ++i) {
      const double num = numeric_derivative(eval, params[k].mutable_value()[i], eps);
      result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[k][i], num));
      ++result.checked;
    }
  return result;
}

struct Entry {
  ag::Var param;
  std::size_t index;
};

// Same comparison restricted to the listed entries.
inline GradCheckResult grad_check_entries(const std::function<ag::Var()>& build, const std::vector<Entry>& entries,
                                          double eps = 1e-6) {
  for (const auto& e : entries) {
    ag::Var p = e.param;
    p.zero_grad();
  }
  ag::backward(build());
  std::vector<double> analytic;
  for (const auto& e : entries) analytic.push_back(e.param.grad()[e.index]);
  GradCheckResult result;
  auto eval = [&] { return build().item(); };
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ag::Var p = entries[k].param;
    const double num = numeric_derivative(eval, p.mutable_value()[entries[k].index], eps);
    result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[k], num));
    ++result.checked;
  }
  return result;
}

// Uniform sample of round(fraction * total) distinct scalar entries (at least one).
inline std::vector<Entry> sample_entries(const std::vector<ag::Var>& params, double fraction, std::uint64_t seed) {
  std::vector<Entry> all;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.value().size(); ++i) all.push_back({p, i});
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * all.size())));
  all.resize(std::min(n, all.size()));
  return all;
}

}  // namespace gdp::testing

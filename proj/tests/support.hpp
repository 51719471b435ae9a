#pragma once
// Test-side oracles. Nothing here calls into the library's numeric code, so
// library results can be checked against an independent computation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dsdf/nn.hpp"
#include "dsdf/scenario.hpp"

namespace oracle {

inline double act(dsdf::nn::Activation a, double x) {
  switch (a) {
    case dsdf::nn::Activation::Relu: return x > 0.0 ? x : 0.0;
    case dsdf::nn::Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    default: return x;
  }
}

// Plain triple loop over the documented [W | b] per-layer layout.
inline std::vector<double> mlp_forward(std::span<const dsdf::nn::LayerShape> layers,
                                       std::span<const double> params, std::span<const double> x) {
  std::vector<double> cur(x.begin(), x.end());
  std::size_t off = 0;
  for (const auto& l : layers) {
    std::vector<double> next(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      long double s = params[off + l.in * l.out + o];
      for (std::size_t i = 0; i < l.in; ++i) s += static_cast<long double>(params[off + o * l.in + i]) * cur[i];
      next[o] = act(l.act, static_cast<double>(s));
    }
    off += l.in * l.out + l.out;
    cur = std::move(next);
  }
  return cur;
}

// Central differences of f over every coordinate of x.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor so that two near-zero numbers agree.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double worst_rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, rel_err(a[i], b[i], floor));
  return w;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace oracle

// Small scenario for fast trainer and evaluation fixtures.
inline dsdf::Scenario tiny_scenario() {
  dsdf::Scenario s;
  s.name = "tiny";
  s.rows = 5;
  s.cols = 5;
  s.agent_count = 2;
  s.food_count = 3;
  s.resource_budget = 4;
  s.targets = {2.0, 2.0};
  s.beta = {0.0, 0.5};
  s.episode_limit = 15;
  s.sight_radius = 1;
  s.resource_case = dsdf::ResourceCase::Enough;
  s.validate();
  return s;
}

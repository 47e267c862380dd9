#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "furnace/params.hpp"

namespace furnace::testutil {

inline double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

/// Central finite differences of `eval` w.r.t. every entry of `values`.
/// `eval` must read the current contents of `values` on each call.
inline std::vector<double> finite_difference(std::vector<double>& values,
                                             const std::function<double()>& eval,
                                             double h = 1e-5) {
  std::vector<double> grads(values.size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = eval();
    values[i] = orig - h;
    const double down = eval();
    values[i] = orig;
    grads[i] = (up - down) / (2.0 * h);
  }
  return grads;
}

/// Largest relative error between an analytic gradient vector and its
/// finite-difference counterpart, ignoring entries where both are tiny.
inline double max_grad_rel_err(const std::vector<double>& analytic,
                               const std::vector<double>& numeric,
                               double scale_floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), scale_floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace furnace::testutil

#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridspot/tensor.hpp"

namespace gridspot {

// Ordered name -> tensor registry; the order defines the checkpoint
// parameter manifest.
using ParamMap = std::vector<std::pair<std::string, Tensor>>;

// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_uniform(Shape shape, int fan_in, int fan_out,
                             std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  int n = shape_size(shape);
  Eigen::ArrayXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return Tensor::from_array(std::move(shape), std::move(v), true);
}

}  // namespace gridspot

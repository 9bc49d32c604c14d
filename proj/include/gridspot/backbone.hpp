#pragma once

#include "gridspot/params.hpp"
#include "gridspot/tensor.hpp"

namespace gridspot {

// Stand-in feature extractor: 3x3 conv stages with relu, stride 2 at the
// first two stages, so the output plane is the input quartered.
struct BackboneConfig {
  int in_channels = 1;
  std::vector<int> stage_channels = {8, 16, 16};

  int out_channels() const { return stage_channels.back(); }
  void validate() const;
};

struct Backbone {
  BackboneConfig cfg;
  std::vector<Tensor> weights;  // [Cout,Cin,3,3] per stage
  std::vector<Tensor> biases;   // [Cout] per stage

  static Backbone init(const BackboneConfig& cfg, std::mt19937_64& rng);
  Tensor extract(const Tensor& image) const;
  void register_params(ParamMap& out) const;
};

}  // namespace gridspot

#pragma once

#include <optional>

#include "gridspot/backbone.hpp"
#include "gridspot/config.hpp"
#include "gridspot/pma.hpp"
#include "gridspot/seq_decoder.hpp"

namespace gridspot {

// Centerline segmentation head: 3x3 conv -> relu -> 1x1 conv to one
// logit plane.
struct SegHead {
  Tensor w1, b1;  // [c_mid, C, 3, 3]
  Tensor w2, b2;  // [1, c_mid, 1, 1]

  static SegHead init(int c, int c_mid, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void register_params(ParamMap& out) const;
};

// The assembled spotter. Parameters are mutated only by training; shared
// read-only use across threads is safe.
struct SpotterModel {
  RunConfig cfg;
  CharDictionary dict;
  Backbone backbone;
  PMAParams pma;
  std::optional<SegHead> seg;
  DecoderParams decoder;

  static SpotterModel init(const RunConfig& cfg);
  ParamMap params() const;  // manifest order, stable across runs
  PMAConfig pma_config() const;
  GridSpec grid_for(int img_h, int img_w) const;

  Tensor features(const Tensor& image) const { return backbone.extract(image); }
  Tensor seg_logits(const Tensor& x) const;

  struct TrainStepOut {
    Tensor total;            // taped scalar
    double cls = 0, ima = 0, cma = 0, recog = 0;
    int positive_grids = 0;
  };
  // Forward + loss on one sample. `phase` may differ from cfg.train.phase
  // (the objective can switch mid-run).
  TrainStepOut forward_loss(const Tensor& image,
                            const std::vector<TextInstance>& instances,
                            Phase phase) const;
};

}  // namespace gridspot

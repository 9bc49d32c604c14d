#pragma once

#include "gridspot/geometry.hpp"
#include "gridspot/tensor.hpp"

namespace gridspot {

struct LossWeights {
  double lambda1 = 1.0;  // centerline segmentation (pretrain)
  double lambda2 = 1.0;  // instance attention
  double lambda3 = 1.0;  // character attention
  double lambda = 1.0;   // centerline segmentation (finetune)

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda < 0)
      throw ConfigError("loss weights must be >= 0");
  }
};

enum class Phase { pretrain, finetune };

Phase phase_from_string(const std::string& s);
std::string to_string(Phase p);

// Builds the 0/1 target tensor from masks and applies the soft Dice loss
// channel-wise; logits [K,H,W], one mask per channel.
Tensor dice_from_masks(const Tensor& logits, const std::vector<RasterMask>& targets);

// Mean cross-entropy over all N*L positions (EOS positions included).
Tensor recog_loss(const Tensor& logits, const std::vector<std::vector<int>>& targets);

struct LossComponents {
  Tensor cls;    // centerline segmentation
  Tensor ima;    // instance attention (pretrain only)
  Tensor cma;    // character attention (pretrain only)
  Tensor recog;  // sequence cross-entropy
};

// Two-phase objective: pretrain combines all four components,
// finetune keeps only centerline + recognition.
Tensor total_loss(Phase phase, const LossComponents& parts, const LossWeights& w);

}  // namespace gridspot

#include "gridspot/losses.hpp"

namespace gridspot {

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "finetune") return Phase::finetune;
  throw ConfigError("unknown phase \"" + s + "\"");
}

std::string to_string(Phase p) {
  return p == Phase::pretrain ? "pretrain" : "finetune";
}

Tensor dice_from_masks(const Tensor& logits,
                       const std::vector<RasterMask>& targets) {
  if (logits.shape().size() != 3)
    throw DimError("dice_from_masks: expects [K,H,W]");
  int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  if (static_cast<int>(targets.size()) != k)
    throw DimError("dice_from_masks: mask count mismatch");
  Eigen::ArrayXd t(static_cast<long>(k) * h * w);
  for (int i = 0; i < k; ++i) {
    const RasterMask& m = targets[static_cast<size_t>(i)];
    if (m.height != h || m.width != w)
      throw DimError("dice_from_masks: mask resolution mismatch");
    for (int p = 0; p < h * w; ++p)
      t[static_cast<long>(i) * h * w + p] = m.bits[static_cast<size_t>(p)];
  }
  return dice_loss(logits, Tensor::from_array(logits.shape(), std::move(t)));
}

Tensor recog_loss(const Tensor& logits,
                  const std::vector<std::vector<int>>& targets) {
  if (logits.shape().size() != 3)
    throw DimError("recog_loss: expects [N,L,M]");
  int n = logits.dim(0), l = logits.dim(1), m = logits.dim(2);
  if (static_cast<int>(targets.size()) != n)
    throw DimError("recog_loss: target batch mismatch");
  std::vector<int> flat;
  flat.reserve(static_cast<size_t>(n) * l);
  for (const auto& row : targets) {
    if (static_cast<int>(row.size()) != l)
      throw DimError("recog_loss: target length mismatch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return cross_entropy_mean(reshape(logits, {n * l, m}), flat);
}

Tensor total_loss(Phase phase, const LossComponents& parts, const LossWeights& w) {
  w.validate();
  if (!parts.recog.defined()) throw UsageError("total_loss: recog loss missing");
  Tensor loss = parts.recog;
  if (phase == Phase::pretrain) {
    if (!parts.ima.defined() || !parts.cma.defined())
      throw DataError("pretrain loss requires character-level supervision");
    loss = loss + parts.ima * w.lambda2 + parts.cma * w.lambda3;
    if (parts.cls.defined()) loss = loss + parts.cls * w.lambda1;
    return loss;
  }
  // cls is absent in single-instance mode (no segmentation head)
  if (parts.cls.defined()) loss = loss + parts.cls * w.lambda;
  return loss;
}

}  // namespace gridspot

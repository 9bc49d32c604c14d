#include "gridspot/model.hpp"

#include <algorithm>

namespace gridspot {

SegHead SegHead::init(int c, int c_mid, std::mt19937_64& rng) {
  SegHead s;
  s.w1 = xavier_uniform({c_mid, c, 3, 3}, c * 9, c_mid * 9, rng);
  s.b1 = Tensor::zeros({c_mid}, true);
  s.w2 = xavier_uniform({1, c_mid, 1, 1}, c_mid, 1, rng);
  s.b2 = Tensor::zeros({1}, true);
  return s;
}

Tensor SegHead::forward(const Tensor& x) const {
  return conv2d(relu(conv2d(x, w1, b1, 1, 1)), w2, b2, 1, 0);
}

void SegHead::register_params(ParamMap& out) const {
  out.emplace_back("seg.conv1.weight", w1);
  out.emplace_back("seg.conv1.bias", b1);
  out.emplace_back("seg.conv2.weight", w2);
  out.emplace_back("seg.conv2.bias", b2);
}

SpotterModel SpotterModel::init(const RunConfig& cfg) {
  cfg.validate();
  SpotterModel m;
  m.cfg = cfg;
  m.dict = cfg.make_dictionary();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x6d6f64656cULL));
  m.backbone = Backbone::init(cfg.backbone, rng);
  m.pma = PMAParams::init(m.pma_config(), rng);
  if (cfg.use_seg_head)
    m.seg = SegHead::init(cfg.backbone.out_channels(), cfg.seg_hidden, rng);
  DecoderConfig dc;
  dc.in_channels = cfg.backbone.out_channels();
  dc.hidden = cfg.decoder_hidden;
  dc.num_classes = m.dict.size();
  m.decoder = DecoderParams::init(dc, rng);
  return m;
}

PMAConfig SpotterModel::pma_config() const {
  PMAConfig pc;
  pc.S = cfg.S;
  pc.L = cfg.L;
  pc.C = cfg.backbone.out_channels();
  pc.c_mid = cfg.cma_hidden;
  return pc;
}

GridSpec SpotterModel::grid_for(int img_h, int img_w) const {
  return GridSpec{cfg.S, img_h / 4, img_w / 4};
}

ParamMap SpotterModel::params() const {
  ParamMap out;
  backbone.register_params(out);
  pma.register_params(out);
  if (seg) seg->register_params(out);
  decoder.register_params(out);
  return out;
}

Tensor SpotterModel::seg_logits(const Tensor& x) const {
  if (!seg) throw UsageError("model has no segmentation head");
  return seg->forward(x);
}

SpotterModel::TrainStepOut SpotterModel::forward_loss(
    const Tensor& image, const std::vector<TextInstance>& instances,
    Phase phase) const {
  TrainStepOut out;
  Tensor x = features(image);
  int fh = x.dim(1), fw = x.dim(2);
  GridSpec grid{cfg.S, fh, fw};

  LossComponents parts;

  // Single-instance mode trains from the transcript alone: grid 0 is
  // always decoded and no geometry enters the graph.
  if (cfg.S == 1 && !cfg.use_seg_head) {
    if (instances.size() != 1)
      throw DataError("single-instance mode expects exactly one instance");
    Tensor ima_logits = ima_forward(x, pma.ima_kernels);
    Tensor cma = cma_forward(x, ima_logits, pma, {0}, cfg.L);
    Tensor fused = attention_fuse(cma, x, cfg.L, cfg.normalize_attention);
    Tensor logits = decode(fused, decoder);
    parts.recog = recog_loss(
        logits, {targets_from_transcript(instances[0].transcript, dict, cfg.L)});
    out.total = parts.recog;
    out.recog = parts.recog.item();
    out.positive_grids = 1;
    return out;
  }

  // Supervision geometry: centerline bands + grid assignment.
  std::vector<RasterMask> bands;
  bands.reserve(instances.size());
  RasterMask cls_target;
  cls_target.height = fh;
  cls_target.width = fw;
  cls_target.bits.assign(static_cast<size_t>(fh) * fw, 0);
  for (const TextInstance& inst : instances) {
    bands.push_back(rasterize(centerline_band(inst, cfg.centerline), fh, fw));
    for (size_t i = 0; i < cls_target.bits.size(); ++i)
      cls_target.bits[i] |= bands.back().bits[i];
  }
  MatchResult assignment = match_grids(instances, grid, cfg.mu, cfg.centerline);
  std::vector<int> positive = select_positive(assignment);
  out.positive_grids = static_cast<int>(positive.size());

  auto instance_by_id = [&](int id) -> const TextInstance& {
    for (size_t i = 0; i < instances.size(); ++i)
      if (instances[i].id == id) return instances[i];
    throw UsageError("internal: unknown instance id");
  };
  auto band_by_id = [&](int id) -> const RasterMask& {
    for (size_t i = 0; i < instances.size(); ++i)
      if (instances[i].id == id) return bands[i];
    throw UsageError("internal: unknown instance id");
  };

  Tensor ima_logits = ima_forward(x, pma.ima_kernels);

  if (seg) parts.cls = dice_from_masks(seg->forward(x), {cls_target});

  if (phase == Phase::pretrain) {
    // IMA: every channel is supervised; unassigned ones target empty masks.
    RasterMask empty;
    empty.height = fh;
    empty.width = fw;
    empty.bits.assign(static_cast<size_t>(fh) * fw, 0);
    std::vector<RasterMask> ima_targets;
    ima_targets.reserve(static_cast<size_t>(cfg.S) * cfg.S);
    for (int ch = 0; ch < cfg.S * cfg.S; ++ch) {
      auto it = assignment.grid_to_instance.find(ch);
      ima_targets.push_back(it == assignment.grid_to_instance.end()
                                ? empty
                                : band_by_id(it->second.instance_id));
    }
    parts.ima = dice_from_masks(ima_logits, ima_targets);

    if (!positive.empty()) {
      // CMA: row (n*L + k) targets the k-th character box of grid n's
      // instance; slots past the transcript target empty masks.
      std::vector<RasterMask> cma_targets;
      cma_targets.reserve(positive.size() * static_cast<size_t>(cfg.L));
      for (int ch : positive) {
        const TextInstance& inst =
            instance_by_id(assignment.grid_to_instance.at(ch).instance_id);
        if (inst.char_boxes.empty())
          throw DataError("pretrain phase requires per-character boxes "
                          "(instance " + std::to_string(inst.id) + ")");
        for (int k = 0; k < cfg.L; ++k)
          cma_targets.push_back(k < static_cast<int>(inst.char_boxes.size())
                                    ? rasterize(inst.char_boxes[k], fh, fw)
                                    : empty);
      }
      Tensor cma = cma_forward(x, ima_logits, pma, positive, cfg.L);
      parts.cma = dice_from_masks(cma, cma_targets);

      Tensor fused = attention_fuse(cma, x, cfg.L, cfg.normalize_attention);
      Tensor logits = decode(fused, decoder);
      std::vector<std::vector<int>> targets;
      for (int ch : positive)
        targets.push_back(targets_from_transcript(
            instance_by_id(assignment.grid_to_instance.at(ch).instance_id)
                .transcript,
            dict, cfg.L));
      parts.recog = recog_loss(logits, targets);
    }
  } else if (!positive.empty()) {
    Tensor cma = cma_forward(x, ima_logits, pma, positive, cfg.L);
    Tensor fused = attention_fuse(cma, x, cfg.L, cfg.normalize_attention);
    Tensor logits = decode(fused, decoder);
    std::vector<std::vector<int>> targets;
    for (int ch : positive)
      targets.push_back(targets_from_transcript(
          instance_by_id(assignment.grid_to_instance.at(ch).instance_id)
              .transcript,
          dict, cfg.L));
    parts.recog = recog_loss(logits, targets);
  }

  if (parts.cls.defined()) out.cls = parts.cls.item();
  if (parts.ima.defined()) out.ima = parts.ima.item();
  if (parts.cma.defined()) out.cma = parts.cma.item();
  if (parts.recog.defined()) out.recog = parts.recog.item();

  if (parts.recog.defined()) {
    out.total = total_loss(phase, parts, cfg.loss_weights);
  } else {
    // No decodable grid in this sample: only the segmentation terms learn.
    Tensor t;
    if (phase == Phase::pretrain) {
      t = parts.ima * cfg.loss_weights.lambda2;
      if (parts.cls.defined()) t = t + parts.cls * cfg.loss_weights.lambda1;
    } else {
      if (!parts.cls.defined())
        throw DataError("sample has no positive grids and no segmentation head");
      t = parts.cls * cfg.loss_weights.lambda;
    }
    out.total = t;
  }
  return out;
}

}  // namespace gridspot

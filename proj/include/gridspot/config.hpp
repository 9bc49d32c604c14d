#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "gridspot/backbone.hpp"
#include "gridspot/geometry.hpp"
#include "gridspot/losses.hpp"
#include "gridspot/seq_decoder.hpp"

namespace gridspot {

struct DatagenConfig {
  int image_h = 64, image_w = 64;
  int min_instances = 1, max_instances = 3;
  int min_len = 1, max_len = 4;
  std::string alphabet = "0123456789";
  int glyph_scale = 2;
  double rotation_deg = 15.0;
  double curvature_prob = 0.0;
  double noise_sigma = 0.05;
  int distractor_strokes = 0;

  void validate(int L) const;
};

struct TrainConfig {
  std::string phase = "pretrain";
  double lr = 0.05;
  std::vector<int> decay_steps;  // strictly increasing iteration indices
  double lr_decay = 10.0;        // divide lr by this at each decay step
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 1;  // samples per optimization step (grad accumulation)
  int max_iters = 4000;
  int eval_every = 500;
  // switch to the finetune objective after this iteration (-1 = never)
  int drop_char_losses_after = -1;

  void validate() const;
};

struct EvalConfig {
  double iou_threshold = 0.1;
  bool case_sensitive = false;
  std::string protocol = "end_to_end";  // end_to_end | word_spotting
  std::string lexicon_mode = "none";    // none | full
  std::vector<std::string> lexicon;

  void validate() const;
};

// Full configuration tree; one JSON file drives every subcommand.
struct RunConfig {
  std::uint64_t seed = 0;
  int S = 4;
  int L = 8;
  double mu = 0.3;
  double mu_infer = 0.05;
  std::string dictionary = "digits4";  // digits4 | full69 | explicit symbols
  bool use_seg_head = true;
  int seg_hidden = 16;
  int cma_hidden = 32;
  int decoder_hidden = 32;
  bool normalize_attention = true;
  int min_region_area = 2;
  BackboneConfig backbone;
  CenterlineConfig centerline;
  LossWeights loss_weights;
  TrainConfig train;
  DatagenConfig datagen;
  EvalConfig eval;

  void validate() const;
  CharDictionary make_dictionary() const;
};

// Unknown keys anywhere in the tree are configuration errors.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config_file(const std::string& path);

}  // namespace gridspot

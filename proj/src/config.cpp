#include "gridspot/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace gridspot {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& scope) {
  if (!j.is_object())
    throw ConfigError("config: " + (scope.empty() ? "root" : scope) +
                      " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key \"" +
                        (scope.empty() ? key : scope + "." + key) + "\"");
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void DatagenConfig::validate(int L) const {
  if (image_h < 16 || image_w < 16 || image_h % 4 || image_w % 4)
    throw ConfigError("datagen: image dims must be >= 16 and divisible by 4");
  if (min_instances < 0 || max_instances < min_instances)
    throw ConfigError("datagen: bad instance count range");
  if (min_len < 1 || max_len < min_len)
    throw ConfigError("datagen: bad transcript length range");
  if (max_len > L)
    throw ConfigError("datagen: max transcript length exceeds L");
  if (alphabet.empty()) throw ConfigError("datagen: empty alphabet");
  if (glyph_scale < 1) throw ConfigError("datagen: glyph scale must be >= 1");
  if (noise_sigma < 0) throw ConfigError("datagen: negative noise sigma");
  if (curvature_prob < 0 || curvature_prob > 1)
    throw ConfigError("datagen: curvature_prob not in [0,1]");
}

void TrainConfig::validate() const {
  phase_from_string(phase);
  if (lr <= 0) throw ConfigError("train: lr must be > 0");
  if (lr_decay <= 1) throw ConfigError("train: lr_decay must be > 1");
  for (size_t i = 1; i < decay_steps.size(); ++i)
    if (decay_steps[i] <= decay_steps[i - 1])
      throw ConfigError("train: decay steps must be strictly increasing");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train: bad momentum");
  if (weight_decay < 0) throw ConfigError("train: negative weight decay");
  if (batch_size < 1 || max_iters < 0 || eval_every < 1)
    throw ConfigError("train: bad loop settings");
}

void EvalConfig::validate() const {
  if (!(iou_threshold > 0 && iou_threshold <= 1))
    throw ConfigError("eval: iou_threshold not in (0,1]");
  if (protocol != "end_to_end" && protocol != "word_spotting")
    throw ConfigError("eval: unknown protocol \"" + protocol + "\"");
  if (lexicon_mode != "none" && lexicon_mode != "full")
    throw ConfigError("eval: unknown lexicon mode \"" + lexicon_mode + "\"");
  if (lexicon_mode == "full" && lexicon.empty())
    throw ConfigError("eval: full lexicon mode with empty lexicon");
}

void RunConfig::validate() const {
  if (S < 1) throw ConfigError("config: S must be >= 1");
  if (L < 1) throw ConfigError("config: L must be >= 1");
  if (!(mu > 0 && mu <= 1)) throw ConfigError("config: mu not in (0,1]");
  if (!(mu_infer > 0 && mu_infer <= 1))
    throw ConfigError("config: mu_infer not in (0,1]");
  if (seg_hidden < 1 || cma_hidden < 1 || decoder_hidden < 1)
    throw ConfigError("config: hidden widths must be >= 1");
  if (min_region_area < 1) throw ConfigError("config: min_region_area < 1");
  if (centerline.height_frac <= 0 || centerline.height_frac >= 1 ||
      centerline.inset_frac < 0 || centerline.inset_frac >= 0.5)
    throw ConfigError("config: bad centerline band proportions");
  if (S > 1 && !use_seg_head)
    throw ConfigError("config: segmentation head is required when S > 1");
  backbone.validate();
  loss_weights.validate();
  train.validate();
  datagen.validate(L);
  eval.validate();
  make_dictionary();
}

CharDictionary RunConfig::make_dictionary() const {
  if (dictionary == "digits4") return CharDictionary::digits4();
  if (dictionary == "full69") return CharDictionary::full69();
  return CharDictionary::from_symbols(dictionary);
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"seed", "S", "L", "mu", "mu_infer", "dictionary",
                     "use_seg_head", "seg_hidden", "cma_hidden",
                     "decoder_hidden", "normalize_attention", "min_region_area",
                     "backbone", "centerline", "loss_weights", "train",
                     "datagen", "eval"},
                 "");
  get(j, "seed", c.seed);
  get(j, "S", c.S);
  get(j, "L", c.L);
  get(j, "mu", c.mu);
  get(j, "mu_infer", c.mu_infer);
  get(j, "dictionary", c.dictionary);
  get(j, "use_seg_head", c.use_seg_head);
  get(j, "seg_hidden", c.seg_hidden);
  get(j, "cma_hidden", c.cma_hidden);
  get(j, "decoder_hidden", c.decoder_hidden);
  get(j, "normalize_attention", c.normalize_attention);
  get(j, "min_region_area", c.min_region_area);
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    reject_unknown(b, {"in_channels", "stage_channels"}, "backbone");
    get(b, "in_channels", c.backbone.in_channels);
    get(b, "stage_channels", c.backbone.stage_channels);
  }
  if (j.contains("centerline")) {
    const json& b = j.at("centerline");
    reject_unknown(b, {"height_frac", "inset_frac"}, "centerline");
    get(b, "height_frac", c.centerline.height_frac);
    get(b, "inset_frac", c.centerline.inset_frac);
  }
  if (j.contains("loss_weights")) {
    const json& b = j.at("loss_weights");
    reject_unknown(b, {"lambda1", "lambda2", "lambda3", "lambda"},
                   "loss_weights");
    get(b, "lambda1", c.loss_weights.lambda1);
    get(b, "lambda2", c.loss_weights.lambda2);
    get(b, "lambda3", c.loss_weights.lambda3);
    get(b, "lambda", c.loss_weights.lambda);
  }
  if (j.contains("train")) {
    const json& b = j.at("train");
    reject_unknown(b,
                   {"phase", "lr", "decay_steps", "lr_decay", "momentum",
                    "weight_decay", "batch_size", "max_iters", "eval_every",
                    "drop_char_losses_after"},
                   "train");
    get(b, "phase", c.train.phase);
    get(b, "lr", c.train.lr);
    get(b, "decay_steps", c.train.decay_steps);
    get(b, "lr_decay", c.train.lr_decay);
    get(b, "momentum", c.train.momentum);
    get(b, "weight_decay", c.train.weight_decay);
    get(b, "batch_size", c.train.batch_size);
    get(b, "max_iters", c.train.max_iters);
    get(b, "eval_every", c.train.eval_every);
    get(b, "drop_char_losses_after", c.train.drop_char_losses_after);
  }
  if (j.contains("datagen")) {
    const json& b = j.at("datagen");
    reject_unknown(b,
                   {"image_h", "image_w", "min_instances", "max_instances",
                    "min_len", "max_len", "alphabet", "glyph_scale",
                    "rotation_deg", "curvature_prob", "noise_sigma",
                    "distractor_strokes"},
                   "datagen");
    get(b, "image_h", c.datagen.image_h);
    get(b, "image_w", c.datagen.image_w);
    get(b, "min_instances", c.datagen.min_instances);
    get(b, "max_instances", c.datagen.max_instances);
    get(b, "min_len", c.datagen.min_len);
    get(b, "max_len", c.datagen.max_len);
    get(b, "alphabet", c.datagen.alphabet);
    get(b, "glyph_scale", c.datagen.glyph_scale);
    get(b, "rotation_deg", c.datagen.rotation_deg);
    get(b, "curvature_prob", c.datagen.curvature_prob);
    get(b, "noise_sigma", c.datagen.noise_sigma);
    get(b, "distractor_strokes", c.datagen.distractor_strokes);
  }
  if (j.contains("eval")) {
    const json& b = j.at("eval");
    reject_unknown(b,
                   {"iou_threshold", "case_sensitive", "protocol",
                    "lexicon_mode", "lexicon"},
                   "eval");
    get(b, "iou_threshold", c.eval.iou_threshold);
    get(b, "case_sensitive", c.eval.case_sensitive);
    get(b, "protocol", c.eval.protocol);
    get(b, "lexicon_mode", c.eval.lexicon_mode);
    get(b, "lexicon", c.eval.lexicon);
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["S"] = c.S;
  j["L"] = c.L;
  j["mu"] = c.mu;
  j["mu_infer"] = c.mu_infer;
  j["dictionary"] = c.dictionary;
  j["use_seg_head"] = c.use_seg_head;
  j["seg_hidden"] = c.seg_hidden;
  j["cma_hidden"] = c.cma_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  j["normalize_attention"] = c.normalize_attention;
  j["min_region_area"] = c.min_region_area;
  j["backbone"] = {{"in_channels", c.backbone.in_channels},
                   {"stage_channels", c.backbone.stage_channels}};
  j["centerline"] = {{"height_frac", c.centerline.height_frac},
                     {"inset_frac", c.centerline.inset_frac}};
  j["loss_weights"] = {{"lambda1", c.loss_weights.lambda1},
                       {"lambda2", c.loss_weights.lambda2},
                       {"lambda3", c.loss_weights.lambda3},
                       {"lambda", c.loss_weights.lambda}};
  j["train"] = {{"phase", c.train.phase},
                {"lr", c.train.lr},
                {"decay_steps", c.train.decay_steps},
                {"lr_decay", c.train.lr_decay},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"max_iters", c.train.max_iters},
                {"eval_every", c.train.eval_every},
                {"drop_char_losses_after", c.train.drop_char_losses_after}};
  j["datagen"] = {{"image_h", c.datagen.image_h},
                  {"image_w", c.datagen.image_w},
                  {"min_instances", c.datagen.min_instances},
                  {"max_instances", c.datagen.max_instances},
                  {"min_len", c.datagen.min_len},
                  {"max_len", c.datagen.max_len},
                  {"alphabet", c.datagen.alphabet},
                  {"glyph_scale", c.datagen.glyph_scale},
                  {"rotation_deg", c.datagen.rotation_deg},
                  {"curvature_prob", c.datagen.curvature_prob},
                  {"noise_sigma", c.datagen.noise_sigma},
                  {"distractor_strokes", c.datagen.distractor_strokes}};
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold},
               {"case_sensitive", c.eval.case_sensitive},
               {"protocol", c.eval.protocol},
               {"lexicon_mode", c.eval.lexicon_mode},
               {"lexicon", c.eval.lexicon}};
  return j;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace gridspot

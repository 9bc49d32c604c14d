#include "gridspot/evalkit.hpp"

#include <algorithm>
#include <cctype>

namespace gridspot {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Polygon bbox_polygon(const std::array<int, 4>& b) {
  return {{double(b[0]), double(b[1])},
          {double(b[2]), double(b[1])},
          {double(b[2]), double(b[3])},
          {double(b[0]), double(b[3])}};
}

}  // namespace

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> row(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      int next = std::min({row[j] + 1, row[j - 1] + 1,
                           diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = row[j];
      row[j] = next;
    }
  }
  return row[b.size()];
}

std::string lexicon_correct(const std::string& pred, const EvalConfig& cfg) {
  if (cfg.lexicon_mode == "none") return pred;
  if (cfg.lexicon.empty())
    throw ConfigError("eval: full lexicon mode with empty lexicon");
  std::string best;
  int best_dist = -1;
  for (const std::string& word : cfg.lexicon) {
    std::string cand = cfg.case_sensitive ? pred : lowercase(pred);
    std::string target = cfg.case_sensitive ? word : lowercase(word);
    int d = edit_distance(cand, target);
    if (best_dist < 0 || d < best_dist || (d == best_dist && word < best)) {
      best_dist = d;
      best = word;
    }
  }
  return best;
}

std::string strip_punctuation(const std::string& s) {
  size_t begin = 0, end = s.size();
  auto is_punct = [](char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
  };
  while (begin < end && is_punct(s[begin])) ++begin;
  while (end > begin && is_punct(s[end - 1])) --end;
  return s.substr(begin, end - begin);
}

bool transcripts_match(const std::string& pred, const std::string& gt,
                       const EvalConfig& cfg) {
  std::string p = lexicon_correct(pred, cfg);
  std::string g = gt;
  if (cfg.protocol == "word_spotting") {
    p = strip_punctuation(p);
    g = strip_punctuation(g);
  }
  if (!cfg.case_sensitive) {
    p = lowercase(p);
    g = lowercase(g);
  }
  return p == g;
}

Pairing match(const std::vector<EvalPrediction>& preds,
              const std::vector<EvalGroundTruth>& gts, const EvalConfig& cfg,
              int image_h, int image_w) {
  cfg.validate();
  bool spotting = cfg.protocol == "word_spotting";

  std::vector<RasterMask> gt_masks;
  std::vector<int> gt_index;  // into gts, skipped entries excluded
  for (size_t g = 0; g < gts.size(); ++g) {
    if (spotting && gts[g].unreadable) continue;
    gt_masks.push_back(rasterize(gts[g].polygon, image_h, image_w, 1.0));
    gt_index.push_back(static_cast<int>(g));
  }

  struct Candidate {
    double iou;
    int pred, gt;  // gt indexes gt_masks
  };
  std::vector<Candidate> candidates;
  for (size_t p = 0; p < preds.size(); ++p) {
    RasterMask pm = rasterize(bbox_polygon(preds[p].bbox), image_h, image_w, 1.0);
    for (size_t g = 0; g < gt_masks.size(); ++g) {
      double iou = mask_iou(pm, gt_masks[g]);
      if (iou > cfg.iou_threshold)
        candidates.push_back({iou, static_cast<int>(p), static_cast<int>(g)});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.iou > b.iou;
                   });

  Pairing out;
  out.num_preds = static_cast<int>(preds.size());
  out.num_gts = static_cast<int>(gt_masks.size());
  std::vector<std::uint8_t> pred_used(preds.size(), 0), gt_used(gt_masks.size(), 0);
  for (const Candidate& c : candidates) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = 1;
    gt_used[c.gt] = 1;
    MatchedPair pair;
    pair.pred = c.pred;
    pair.gt = gt_index[c.gt];
    pair.iou = c.iou;
    pair.correct = transcripts_match(preds[c.pred].transcript,
                                     gts[pair.gt].transcript, cfg);
    out.pairs.push_back(pair);
  }
  return out;
}

Fscore fscore(const std::vector<Pairing>& pairings) {
  long correct = 0, preds = 0, gts = 0;
  for (const Pairing& p : pairings) {
    preds += p.num_preds;
    gts += p.num_gts;
    for (const MatchedPair& m : p.pairs)
      if (m.correct) ++correct;
  }
  Fscore f;
  if (preds > 0) f.precision = double(correct) / double(preds);
  if (gts > 0) f.recall = double(correct) / double(gts);
  if (f.precision + f.recall > 0)
    f.hmean = 2 * f.precision * f.recall / (f.precision + f.recall);
  return f;
}

}  // namespace gridspot

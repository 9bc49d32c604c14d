#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridspot/config.hpp"
#include "gridspot/geometry.hpp"

namespace gridspot {

struct EvalPrediction {
  std::array<int, 4> bbox = {0, 0, 0, 0};  // x0,y0,x1,y1 image coords
  std::string transcript;
};

struct EvalGroundTruth {
  Polygon polygon;  // image coords
  std::string transcript;
  bool unreadable = false;
};

struct MatchedPair {
  int pred = 0, gt = 0;
  double iou = 0;
  bool correct = false;  // transcripts agree under the active rules
};

struct Pairing {
  std::vector<MatchedPair> pairs;
  int num_preds = 0, num_gts = 0;  // counted GT excludes skipped entries
};

// Greedy one-to-one matching by descending IoU (rasterized at image
// resolution); pairs below the threshold never match. Transcript
// comparison honors case, protocol, and lexicon settings from cfg.
Pairing match(const std::vector<EvalPrediction>& preds,
              const std::vector<EvalGroundTruth>& gts, const EvalConfig& cfg,
              int image_h, int image_w);

struct Fscore {
  double precision = 0, recall = 0, hmean = 0;
};

// correct/|preds|, correct/|GT|, harmonic mean; all 0 when a denominator
// is 0. Accumulates across images by summing pair counts first.
Fscore fscore(const std::vector<Pairing>& pairings);

// Levenshtein edit distance.
int edit_distance(const std::string& a, const std::string& b);

// Full-lexicon correction: replace pred with the nearest lexicon word
// (ties -> lexicographically smallest). "none" mode returns pred as is.
std::string lexicon_correct(const std::string& pred, const EvalConfig& cfg);

// word_spotting protocol helper: strips leading/trailing punctuation.
std::string strip_punctuation(const std::string& s);

// True when pred counts as a correct read of gt under cfg.
bool transcripts_match(const std::string& pred, const std::string& gt,
                       const EvalConfig& cfg);

}  // namespace gridspot

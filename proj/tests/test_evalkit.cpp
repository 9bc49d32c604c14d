#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "gridspot/evalkit.hpp"

using namespace gridspot;

namespace {

EvalPrediction pred(int x0, int y0, int x1, int y1, const std::string& t) {
  return {{x0, y0, x1, y1}, t};
}

EvalGroundTruth gt_rect(double x0, double y0, double x1, double y1,
                        const std::string& t, bool unreadable = false) {
  return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, t, unreadable};
}

// best achievable correct count over all one-to-one assignments honoring
// the IoU threshold (brute force over permutations of predictions)
int optimal_correct(const std::vector<EvalPrediction>& preds,
                    const std::vector<EvalGroundTruth>& gts,
                    const EvalConfig& cfg, int h, int w) {
  std::vector<int> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  int best = 0;
  std::sort(order.begin(), order.end());
  do {
    std::vector<std::uint8_t> gt_used(gts.size(), 0);
    int correct = 0;
    for (int p : order) {
      RasterMask pm = rasterize({{double(preds[p].bbox[0]), double(preds[p].bbox[1])},
                                 {double(preds[p].bbox[2]), double(preds[p].bbox[1])},
                                 {double(preds[p].bbox[2]), double(preds[p].bbox[3])},
                                 {double(preds[p].bbox[0]), double(preds[p].bbox[3])}},
                                h, w, 1.0);
      int pick = -1;
      double pick_iou = cfg.iou_threshold;
      for (size_t g = 0; g < gts.size(); ++g) {
        if (gt_used[g]) continue;
        double iou = mask_iou(pm, rasterize(gts[g].polygon, h, w, 1.0));
        if (iou > pick_iou &&
            transcripts_match(preds[p].transcript, gts[g].transcript, cfg)) {
          pick_iou = iou;
          pick = static_cast<int>(g);
        }
      }
      if (pick >= 0) {
        gt_used[pick] = 1;
        ++correct;
      }
    }
    best = std::max(best, correct);
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

}  // namespace

TEST_CASE("perfect predictions score 1 everywhere") {
  EvalConfig cfg;
  std::vector<EvalPrediction> p = {pred(4, 4, 20, 12, "123"),
                                   pred(30, 30, 50, 40, "77")};
  std::vector<EvalGroundTruth> g = {gt_rect(4, 4, 20, 12, "123"),
                                    gt_rect(30, 30, 50, 40, "77")};
  Fscore f = fscore({match(p, g, cfg, 64, 64)});
  CHECK(f.precision == 1.0);
  CHECK(f.recall == 1.0);
  CHECK(f.hmean == 1.0);
}

TEST_CASE("weak overlap below the threshold never matches") {
  EvalConfig cfg;  // threshold 0.1
  // 20x20 boxes overlapping in a 4x10 strip: IoU = 40/760 ~ 0.053
  std::vector<EvalPrediction> p = {pred(0, 0, 20, 20, "x")};
  std::vector<EvalGroundTruth> g = {gt_rect(16, 10, 36, 30, "x")};
  Pairing m = match(p, g, cfg, 64, 64);
  CHECK(m.pairs.empty());
  Fscore f = fscore({m});
  CHECK(f.hmean == 0.0);
}

TEST_CASE("greedy matching equals the exhaustive assignment oracle") {
  EvalConfig cfg;
  // 3 predictions contending for 2 ground truths with distinct overlaps
  std::vector<EvalPrediction> p = {pred(0, 0, 16, 8, "aa"),
                                   pred(2, 0, 18, 8, "aa"),
                                   pred(30, 30, 46, 38, "bb")};
  std::vector<EvalGroundTruth> g = {gt_rect(0, 0, 16, 8, "aa"),
                                    gt_rect(30, 30, 46, 38, "bb")};
  Pairing m = match(p, g, cfg, 64, 64);
  int correct = 0;
  for (const MatchedPair& pair : m.pairs)
    if (pair.correct) ++correct;
  CHECK(correct == optimal_correct(p, g, cfg, 64, 64));
  CHECK(correct == 2);
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0].iou >= m.pairs[1].iou);  // descending-IoU greedy order

  // randomized episodes stay at the optimum as well
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<EvalPrediction> rp;
    std::vector<EvalGroundTruth> rg;
    for (int i = 0; i < 3; ++i) {
      int x = static_cast<int>(rng() % 40), y = static_cast<int>(rng() % 40);
      rp.push_back(pred(x, y, x + 12, y + 8, std::to_string(rng() % 2)));
    }
    for (int i = 0; i < 2; ++i) {
      int x = static_cast<int>(rng() % 40), y = static_cast<int>(rng() % 40);
      rg.push_back(gt_rect(x, y, x + 12, y + 8, std::to_string(rng() % 2)));
    }
    Pairing rm = match(rp, rg, cfg, 64, 64);
    int rcorrect = 0;
    for (const MatchedPair& pair : rm.pairs)
      if (pair.correct) ++rcorrect;
    CHECK(rcorrect == optimal_correct(rp, rg, cfg, 64, 64));
  }
}

TEST_CASE("fscore arithmetic") {
  SUBCASE("degenerate zero-zero episode") {
    Pairing empty;
    Fscore f = fscore({empty});
    CHECK(f.precision == 0.0);
    CHECK(f.recall == 0.0);
    CHECK(f.hmean == 0.0);
  }
  SUBCASE("one correct of two predictions against one ground truth") {
    Pairing p;
    p.num_preds = 2;
    p.num_gts = 1;
    p.pairs.push_back({0, 0, 0.9, true});
    Fscore f = fscore({p});
    CHECK(f.precision == 0.5);
    CHECK(f.recall == 1.0);
    CHECK(f.hmean == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("hand-computed multi-image aggregate") {
    // image A: 3 preds, 2 correct of 2 GT; image B: 1 pred, 1 correct of 3 GT
    Pairing a;
    a.num_preds = 3;
    a.num_gts = 2;
    a.pairs.push_back({0, 0, 0.8, true});
    a.pairs.push_back({1, 1, 0.7, true});
    Pairing b;
    b.num_preds = 1;
    b.num_gts = 3;
    b.pairs.push_back({0, 2, 0.6, true});
    Fscore f = fscore({a, b});
    CHECK(f.precision == doctest::Approx(3.0 / 4.0));
    CHECK(f.recall == doctest::Approx(3.0 / 5.0));
    CHECK(f.hmean == doctest::Approx(2 * 0.75 * 0.6 / (0.75 + 0.6)));
  }
  SUBCASE("harmonic-mean identity and zero rule") {
    Pairing p;
    p.num_preds = 4;
    p.num_gts = 5;
    p.pairs.push_back({0, 0, 0.5, true});
    p.pairs.push_back({1, 1, 0.5, false});
    Fscore f = fscore({p});
    CHECK(f.hmean ==
          doctest::Approx(2 * f.precision * f.recall / (f.precision + f.recall)));
    Pairing none = p;
    none.pairs.clear();
    CHECK(fscore({none}).hmean == 0.0);
  }
}

TEST_CASE("raising the IoU threshold never increases recall") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<EvalPrediction> p;
    std::vector<EvalGroundTruth> g;
    for (int i = 0; i < 4; ++i) {
      int x = static_cast<int>(rng() % 40), y = static_cast<int>(rng() % 40);
      p.push_back(pred(x, y, x + 14, y + 10, "t"));
      int gx = x + static_cast<int>(rng() % 12), gy = y + static_cast<int>(rng() % 8);
      g.push_back(gt_rect(gx, gy, gx + 14, gy + 10, "t"));
    }
    double prev = 2.0;
    for (double thr : {0.1, 0.3, 0.5}) {
      EvalConfig cfg;
      cfg.iou_threshold = thr;
      double recall = fscore({match(p, g, cfg, 64, 64)}).recall;
      CHECK(recall <= prev);
      prev = recall;
    }
  }
}

TEST_CASE("edit distance") {
  CHECK(edit_distance("", "") == 0);
  CHECK(edit_distance("abc", "abc") == 0);
  CHECK(edit_distance("abc", "") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("he1lo", "hello") == 1);
}

TEST_CASE("lexicon correction") {
  EvalConfig cfg;
  cfg.lexicon_mode = "full";
  cfg.lexicon = {"hello", "world"};
  SUBCASE("nearest word wins") {
    CHECK(lexicon_correct("he1lo", cfg) == "hello");
    CHECK(transcripts_match("he1lo", "hello", cfg));
  }
  SUBCASE("none mode is exact") {
    EvalConfig none;
    CHECK(lexicon_correct("he1lo", none) == "he1lo");
    CHECK_FALSE(transcripts_match("he1lo", "hello", none));
  }
  SUBCASE("ties break to the lexicographically smallest word") {
    EvalConfig tie = cfg;
    tie.lexicon = {"cat", "bat"};
    CHECK(lexicon_correct("rat", tie) == "bat");
  }
  SUBCASE("empty lexicon in full mode is a config error") {
    EvalConfig bad = cfg;
    bad.lexicon.clear();
    CHECK_THROWS_AS(lexicon_correct("x", bad), ConfigError);
  }
  SUBCASE("correction never hurts when the truth is in the lexicon") {
    std::vector<std::string> gts = {"hello", "world"};
    std::vector<std::string> noisy = {"hell0", "w0rld"};
    EvalConfig none;
    int plain = 0, corrected = 0;
    for (size_t i = 0; i < gts.size(); ++i) {
      plain += transcripts_match(noisy[i], gts[i], none) ? 1 : 0;
      corrected += transcripts_match(noisy[i], gts[i], cfg) ? 1 : 0;
    }
    CHECK(corrected >= plain);
    CHECK(corrected == 2);
  }
}

TEST_CASE("word-spotting protocol") {
  SUBCASE("punctuation stripping") {
    CHECK(strip_punctuation("\"hello!\"") == "hello");
    CHECK(strip_punctuation("don't") == "don't");  // interior stays
    CHECK(strip_punctuation("...") == "");
  }
  SUBCASE("stripped transcripts compare equal") {
    EvalConfig cfg;
    cfg.protocol = "word_spotting";
    CHECK(transcripts_match("hello", "hello!", cfg));
    CHECK_FALSE(transcripts_match("hello", "hello!", EvalConfig{}));
  }
  SUBCASE("unreadable ground truth is skipped") {
    EvalConfig cfg;
    cfg.protocol = "word_spotting";
    std::vector<EvalPrediction> p = {pred(0, 0, 16, 8, "aa")};
    std::vector<EvalGroundTruth> g = {gt_rect(0, 0, 16, 8, "aa"),
                                      gt_rect(30, 30, 46, 38, "??", true)};
    Pairing m = match(p, g, cfg, 64, 64);
    CHECK(m.num_gts == 1);
    Fscore f = fscore({m});
    CHECK(f.recall == 1.0);
  }
}

TEST_CASE("case sensitivity") {
  EvalConfig insensitive;  // default
  CHECK(transcripts_match("HeLLo", "hello", insensitive));
  EvalConfig sensitive;
  sensitive.case_sensitive = true;
  CHECK_FALSE(transcripts_match("HeLLo", "hello", sensitive));
}

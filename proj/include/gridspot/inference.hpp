#pragma once

#include <array>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "gridspot/image_io.hpp"
#include "gridspot/model.hpp"

namespace gridspot {

// sigmoid(logit) >= 0.5 sets the pixel (the boundary counts as text).
RasterMask segment_centerline(const Tensor& seg_logits);

struct Region {
  std::vector<std::pair<int, int>> pixels;  // (y, x), BFS discovery order
  int min_y = 0, min_x = 0, max_y = 0, max_x = 0;

  RasterMask to_mask(int height, int width) const;
};

// 4-connected components by breadth-first search; components below
// min_area are discarded; ordering is by top-left-most pixel.
std::vector<Region> connected_regions(const RasterMask& mask, int min_area);

struct SpotResult {
  int region_id = 0;
  std::string transcript;
  std::vector<double> char_confidences;        // one per kept character
  std::pair<int, int> best_grid = {0, 0};      // (row, col)
  std::array<int, 4> region_bbox = {0, 0, 0, 0};  // x0,y0,x1,y1 image coords
  std::vector<std::pair<int, double>> contributing_grids;  // (channel, ratio)
};

// Character-weighted voting: position k's class is
// argmax_c sum_j o_j * probs[j](k, c); the transcript stops at the first
// EOS; confidences are the winning weighted sums divided by sum_j o_j.
// Each probs entry is a row-major [L, M] probability matrix.
std::pair<std::string, std::vector<double>> weighted_vote(
    const std::vector<Eigen::ArrayXd>& probs, const std::vector<double>& o,
    int L, int M, const CharDictionary& dict);

struct SpotOutput {
  std::vector<SpotResult> results;
  int dropped_regions = 0;  // regions overlapping no contributing grid
};

// Full pipeline on one image: segmentation, BFS regions, grid voting.
// With S=1 and no segmentation head, decodes grid 0 directly instead.
SpotOutput spot(const SpotterModel& model, const Tensor& image);

// Character-slot attention heatmap: sum over grids of sigmoid(logits) at
// slot k, min-max scaled to [0,1] (flat maps stay flat at 0.5).
GrayImage cma_overlay(const Tensor& cma_logits_full, int k, int L);

// One `{image, results:[{bbox, transcript, confidence, best_grid}]}` line.
nlohmann::json results_json(const std::string& image_name, const SpotOutput& out);

}  // namespace gridspot

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gridspot/common.hpp"

namespace gridspot {

struct Pt {
  double x = 0, y = 0;
};
using Polygon = std::vector<Pt>;

Pt centroid(const Polygon& poly);
double polygon_area(const Polygon& poly);  // signed shoelace area
Polygon scale_about(const Polygon& poly, const Pt& center, double factor);

// One ground-truth text: boundary polygon in image pixels, transcript,
// optional per-character quads in reading order. The polygon follows the
// quad-chain convention: the first half of the vertices runs along one
// long side, the second half runs back along the other, so vertex i pairs
// with vertex (n-1-i).
struct TextInstance {
  Polygon polygon;
  std::string transcript;
  std::vector<Polygon> char_boxes;
  int id = 0;
  bool unreadable = false;

  void validate() const;  // simple polygon, >= 3 vertices, box/transcript counts
};

struct RasterMask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> bits;  // row-major 0/1
  bool degenerate = false;         // zero-area polygon after scaling

  std::uint8_t at(int y, int x) const {
    return bits[static_cast<size_t>(y) * width + x];
  }
  int area() const;
};

int intersection_area(const RasterMask& a, const RasterMask& b);
double mask_iou(const RasterMask& a, const RasterMask& b);

// Scanline fill: a pixel is set iff its center lies inside the scaled
// polygon under the even-odd rule.
RasterMask rasterize(const Polygon& polygon, int height, int width,
                     double image_to_feature_scale = 0.25);

// max(Inter/A(cell), Inter/A(instance)); 0 when either area is 0.
double occupation_ratio(const RasterMask& instance_mask,
                        const RasterMask& grid_cell);

// S x S partition of the feature plane. Cell (h, w) covers rows
// [floor(h*feat_h/S), floor((h+1)*feat_h/S)) and the analogous columns.
struct GridSpec {
  int S = 1;
  int feat_h = 0, feat_w = 0;

  int row_begin(int h) const { return h * feat_h / S; }
  int row_end(int h) const { return (h + 1) * feat_h / S; }
  int col_begin(int w) const { return w * feat_w / S; }
  int col_end(int w) const { return (w + 1) * feat_w / S; }
  RasterMask cell_mask(int h, int w) const;
  RasterMask cell_mask(int channel) const;
};

struct CenterlineConfig {
  double height_frac = 0.4;  // band cross-axis extent as a fraction of height
  double inset_frac = 0.2;   // end inset as a fraction of local height
};

// Shrunk band along the instance's long axis; falls back to the polygon
// scaled by 0.5 about its centroid when the band would vanish.
Polygon centerline_band(const TextInstance& instance,
                        const CenterlineConfig& cfg = {});

struct GridMatch {
  int instance_id = 0;
  double ratio = 0;
};

struct MatchResult {
  std::map<int, GridMatch> grid_to_instance;  // keyed by grid channel index
  std::vector<int> unmatched_instances;       // ids with no assigned grid
};

// Training-time grid assignment: grid j goes to instance i iff o_{i,j} > mu
// and i has the largest ratio among claimants (ties: smaller instance id).
// Ratios are computed on rasterized centerline bands.
MatchResult match_grids(const std::vector<TextInstance>& instances,
                        const GridSpec& grid, double mu,
                        const CenterlineConfig& cfg = {},
                        double image_to_feature_scale = 0.25);

}  // namespace gridspot

#include "gridspot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gridspot {

Pt centroid(const Polygon& poly) {
  Pt c;
  for (const Pt& p : poly) {
    c.x += p.x;
    c.y += p.y;
  }
  double n = static_cast<double>(poly.size());
  return {c.x / n, c.y / n};
}

double polygon_area(const Polygon& poly) {
  double a = 0;
  size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Pt& p = poly[i];
    const Pt& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

Polygon scale_about(const Polygon& poly, const Pt& c, double f) {
  Polygon out;
  out.reserve(poly.size());
  for (const Pt& p : poly)
    out.push_back({c.x + (p.x - c.x) * f, c.y + (p.y - c.y) * f});
  return out;
}

namespace {

bool segments_properly_intersect(const Pt& a, const Pt& b, const Pt& c,
                                 const Pt& d) {
  auto cross = [](const Pt& o, const Pt& p, const Pt& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  double d1 = cross(c, d, a), d2 = cross(c, d, b);
  double d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

}  // namespace

void TextInstance::validate() const {
  if (polygon.size() < 3)
    throw DataError("instance " + std::to_string(id) +
                    ": polygon needs >= 3 vertices");
  size_t n = polygon.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // adjacent edges share an endpoint, skip them
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(polygon[i], polygon[(i + 1) % n],
                                      polygon[j], polygon[(j + 1) % n]))
        throw DataError("instance " + std::to_string(id) +
                        ": polygon self-intersects");
    }
  }
  if (!char_boxes.empty() &&
      char_boxes.size() != transcript.size())
    throw DataError("instance " + std::to_string(id) + ": " +
                    std::to_string(char_boxes.size()) + " char boxes for " +
                    std::to_string(transcript.size()) + " characters");
}

int RasterMask::area() const {
  return static_cast<int>(std::accumulate(bits.begin(), bits.end(), 0));
}

int intersection_area(const RasterMask& a, const RasterMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw DimError("intersection_area: mask dims differ");
  int n = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) n += a.bits[i] & b.bits[i];
  return n;
}

double mask_iou(const RasterMask& a, const RasterMask& b) {
  int inter = intersection_area(a, b);
  int uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

RasterMask rasterize(const Polygon& polygon, int height, int width,
                     double image_to_feature_scale) {
  RasterMask mask;
  mask.height = height;
  mask.width = width;
  mask.bits.assign(static_cast<size_t>(height) * width, 0);

  Polygon sp;
  sp.reserve(polygon.size());
  for (const Pt& p : polygon)
    sp.push_back({p.x * image_to_feature_scale, p.y * image_to_feature_scale});
  if (sp.size() < 3 || std::abs(polygon_area(sp)) == 0.0) {
    mask.degenerate = true;
    return mask;
  }

  size_t n = sp.size();
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    double py = y + 0.5;
    xs.clear();
    for (size_t i = 0; i < n; ++i) {
      const Pt& a = sp[i];
      const Pt& b = sp[(i + 1) % n];
      if ((a.y <= py) != (b.y <= py))
        xs.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      // pixel center x+0.5 in [xs[i], xs[i+1])
      int x0 = static_cast<int>(std::ceil(xs[i] - 0.5));
      int x1 = static_cast<int>(std::ceil(xs[i + 1] - 0.5));
      x0 = std::max(x0, 0);
      x1 = std::min(x1, width);
      for (int x = x0; x < x1; ++x)
        mask.bits[static_cast<size_t>(y) * width + x] = 1;
    }
  }
  if (mask.area() == 0) mask.degenerate = true;
  return mask;
}

double occupation_ratio(const RasterMask& instance_mask,
                        const RasterMask& grid_cell) {
  int a_inst = instance_mask.area();
  int a_cell = grid_cell.area();
  if (a_inst == 0 || a_cell == 0) return 0.0;
  int inter = intersection_area(instance_mask, grid_cell);
  return std::max(static_cast<double>(inter) / a_cell,
                  static_cast<double>(inter) / a_inst);
}

RasterMask GridSpec::cell_mask(int h, int w) const {
  if (h < 0 || h >= S || w < 0 || w >= S)
    throw UsageError("GridSpec: cell index out of range");
  RasterMask m;
  m.height = feat_h;
  m.width = feat_w;
  m.bits.assign(static_cast<size_t>(feat_h) * feat_w, 0);
  for (int y = row_begin(h); y < row_end(h); ++y)
    for (int x = col_begin(w); x < col_end(w); ++x)
      m.bits[static_cast<size_t>(y) * feat_w + x] = 1;
  return m;
}

RasterMask GridSpec::cell_mask(int channel) const {
  return cell_mask(channel / S, channel % S);
}

namespace {

struct Midline {
  std::vector<Pt> pts;
  std::vector<double> heights;  // local side-to-side distance at each station
};

Midline midline_of(const Polygon& poly) {
  size_t n2 = poly.size();
  size_t n = n2 / 2;
  Midline m;
  if (n2 % 2 != 0 || n < 2) return m;

  Polygon p = poly;
  if (n == 2) {
    // Plain quad: rotate the ordering so the paired sides are the long ones.
    auto len = [](const Pt& a, const Pt& b) {
      return std::hypot(a.x - b.x, a.y - b.y);
    };
    double along = len(p[0], p[1]) + len(p[2], p[3]);
    double across = len(p[1], p[2]) + len(p[3], p[0]);
    if (across > along) p = {p[1], p[2], p[3], p[0]};
  }
  for (size_t i = 0; i < n; ++i) {
    const Pt& a = p[i];
    const Pt& b = p[n2 - 1 - i];
    m.pts.push_back({(a.x + b.x) / 2, (a.y + b.y) / 2});
    m.heights.push_back(std::hypot(a.x - b.x, a.y - b.y));
  }
  return m;
}

// Trims `cut0` of arc length from the start and `cut1` from the end,
// interpolating station heights. Returns false when nothing remains.
bool trim_polyline(Midline& m, double cut0, double cut1) {
  std::vector<double> arc(m.pts.size(), 0.0);
  for (size_t i = 1; i < m.pts.size(); ++i)
    arc[i] = arc[i - 1] + std::hypot(m.pts[i].x - m.pts[i - 1].x,
                                     m.pts[i].y - m.pts[i - 1].y);
  double total = arc.back();
  if (total - cut0 - cut1 <= 1e-9) return false;
  double lo = cut0, hi = total - cut1;

  auto sample = [&](double s, Pt& pt, double& h) {
    size_t i = 1;
    while (i + 1 < arc.size() && arc[i] < s) ++i;
    double seg = arc[i] - arc[i - 1];
    double t = seg > 0 ? (s - arc[i - 1]) / seg : 0.0;
    pt = {m.pts[i - 1].x + t * (m.pts[i].x - m.pts[i - 1].x),
          m.pts[i - 1].y + t * (m.pts[i].y - m.pts[i - 1].y)};
    h = m.heights[i - 1] + t * (m.heights[i] - m.heights[i - 1]);
  };

  Midline out;
  Pt pt;
  double h;
  sample(lo, pt, h);
  out.pts.push_back(pt);
  out.heights.push_back(h);
  for (size_t i = 0; i < m.pts.size(); ++i)
    if (arc[i] > lo && arc[i] < hi) {
      out.pts.push_back(m.pts[i]);
      out.heights.push_back(m.heights[i]);
    }
  sample(hi, pt, h);
  out.pts.push_back(pt);
  out.heights.push_back(h);
  m = std::move(out);
  return true;
}

}  // namespace

Polygon centerline_band(const TextInstance& instance,
                        const CenterlineConfig& cfg) {
  Midline m = midline_of(instance.polygon);
  auto fallback = [&] {
    return scale_about(instance.polygon, centroid(instance.polygon), 0.5);
  };
  if (m.pts.size() < 2) return fallback();

  double cut0 = cfg.inset_frac * m.heights.front();
  double cut1 = cfg.inset_frac * m.heights.back();
  if (!trim_polyline(m, cut0, cut1)) return fallback();

  size_t n = m.pts.size();
  Polygon upper(n), lower(n);
  for (size_t i = 0; i < n; ++i) {
    Pt d;
    if (i == 0)
      d = {m.pts[1].x - m.pts[0].x, m.pts[1].y - m.pts[0].y};
    else if (i == n - 1)
      d = {m.pts[n - 1].x - m.pts[n - 2].x, m.pts[n - 1].y - m.pts[n - 2].y};
    else
      d = {m.pts[i + 1].x - m.pts[i - 1].x, m.pts[i + 1].y - m.pts[i - 1].y};
    double len = std::hypot(d.x, d.y);
    if (len == 0) return fallback();
    Pt nrm = {-d.y / len, d.x / len};
    double half = 0.5 * cfg.height_frac * m.heights[i];
    if (half <= 0) return fallback();
    upper[i] = {m.pts[i].x + half * nrm.x, m.pts[i].y + half * nrm.y};
    lower[i] = {m.pts[i].x - half * nrm.x, m.pts[i].y - half * nrm.y};
  }
  Polygon band = upper;
  band.insert(band.end(), lower.rbegin(), lower.rend());
  return band;
}

MatchResult match_grids(const std::vector<TextInstance>& instances,
                        const GridSpec& grid, double mu,
                        const CenterlineConfig& cfg,
                        double image_to_feature_scale) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("match_grids: mu not in (0,1]");
  MatchResult result;
  std::vector<RasterMask> bands;
  bands.reserve(instances.size());
  for (const TextInstance& inst : instances)
    bands.push_back(rasterize(centerline_band(inst, cfg), grid.feat_h,
                              grid.feat_w, image_to_feature_scale));

  for (int h = 0; h < grid.S; ++h) {
    for (int w = 0; w < grid.S; ++w) {
      RasterMask cell = grid.cell_mask(h, w);
      int channel = h * grid.S + w;
      for (size_t i = 0; i < instances.size(); ++i) {
        double o = occupation_ratio(bands[i], cell);
        if (o <= mu) continue;
        auto it = result.grid_to_instance.find(channel);
        bool take = it == result.grid_to_instance.end() ||
                    o > it->second.ratio ||
                    (o == it->second.ratio &&
                     instances[i].id < it->second.instance_id);
        if (take)
          result.grid_to_instance[channel] = {instances[i].id, o};
      }
    }
  }
  for (const TextInstance& inst : instances) {
    bool assigned = false;
    for (const auto& [ch, gm] : result.grid_to_instance)
      if (gm.instance_id == inst.id) assigned = true;
    if (!assigned) result.unmatched_instances.push_back(inst.id);
  }
  return result;
}

}  // namespace gridspot

#include "gridspot/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

namespace gridspot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 5x7 glyphs, one string of 35 '0'/'1' cells per symbol, row-major.
struct GlyphDef {
  char symbol;
  const char* rows;
};

constexpr GlyphDef kGlyphs[] = {
    {'0', "01110100011001110101110011000101110"},
    {'1', "00100011000010000100001000010001110"},
    {'2', "01110100010000100010001000100011111"},
    {'3', "11111000100010000010000011000101110"},
    {'4', "00010001100101010010111110001000010"},
    {'5', "11111100001111000001000011000101110"},
    {'6', "00110010001000011110100011000101110"},
    {'7', "11111000010001000100010000100001000"},
    {'8', "01110100011000101110100011000101110"},
    {'9', "01110100011000101111000010001001100"},
    {'A', "01110100011000111111100011000110001"},
    {'B', "11110100011000111110100011000111110"},
    {'C', "01110100011000010000100001000101110"},
    {'D', "11100100101000110001100011001011100"},
    {'E', "11111100001000011110100001000011111"},
    {'F', "11111100001000011110100001000010000"},
    {'G', "01110100011000010111100011000101111"},
    {'H', "10001100011000111111100011000110001"},
    {'I', "01110001000010000100001000010001110"},
    {'J', "00111000100001000010000101001001100"},
    {'K', "10001100101010011000101001001010001"},
    {'L', "10000100001000010000100001000011111"},
    {'M', "10001110111010110101100011000110001"},
    {'N', "10001100011100110101100111000110001"},
    {'O', "01110100011000110001100011000101110"},
    {'P', "11110100011000111110100001000010000"},
    {'Q', "01110100011000110001101011001001101"},
    {'R', "11110100011000111110101001001010001"},
    {'S', "01111100001000001110000010000111110"},
    {'T', "11111001000010000100001000010000100"},
    {'U', "10001100011000110001100011000101110"},
    {'V', "10001100011000110001100010101000100"},
    {'W', "10001100011000110101101011010101010"},
    {'X', "10001100010101000100010101000110001"},
    {'Y', "10001100010101000100001000010000100"},
    {'Z', "11111000010001000100010001000011111"},
};

const char* glyph_rows(char c) {
  char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const GlyphDef& g : kGlyphs)
    if (g.symbol == u) return g.rows;
  return nullptr;
}

constexpr int kGlyphW = 5, kGlyphH = 7;
constexpr int kCellW = 6;  // glyph width + 1 column of spacing, in glyph units

struct Frame {
  Pt origin;       // image position of path point s=0
  double heading;  // rotation applied to the whole instance
};

// Path through the instance in local units before the global transform:
// straight line, or an arc with the given total bend (radians).
struct Path {
  double total_len;
  double bend;  // 0 for straight

  Pt point(double s) const {
    if (bend == 0.0) return {s, 0.0};
    double r = total_len / bend;
    double a = s / total_len * bend;
    return {r * std::sin(a), r * (1.0 - std::cos(a))};
  }
  double tangent(double s) const { return bend == 0.0 ? 0.0 : s / total_len * bend; }
};

Pt apply_frame(const Frame& f, const Pt& p) {
  double cs = std::cos(f.heading), sn = std::sin(f.heading);
  return {f.origin.x + p.x * cs - p.y * sn, f.origin.y + p.x * sn + p.y * cs};
}

Polygon oriented_quad(const Pt& center, double angle, double half_w, double half_h) {
  double cs = std::cos(angle), sn = std::sin(angle);
  Pt d = {cs, sn}, n = {-sn, cs};
  return {{center.x - half_w * d.x - half_h * n.x,
           center.y - half_w * d.y - half_h * n.y},
          {center.x + half_w * d.x - half_h * n.x,
           center.y + half_w * d.y - half_h * n.y},
          {center.x + half_w * d.x + half_h * n.x,
           center.y + half_w * d.y + half_h * n.y},
          {center.x - half_w * d.x + half_h * n.x,
           center.y - half_w * d.y + half_h * n.y}};
}

struct InstanceLayout {
  Polygon polygon;
  std::vector<Polygon> char_boxes;
  std::vector<Pt> glyph_centers;
  std::vector<double> glyph_angles;
};

InstanceLayout layout_instance(const std::string& transcript, double scale,
                               const Frame& frame, double bend) {
  int n = static_cast<int>(transcript.size());
  double cell = kCellW * scale;
  Path path{n * cell, bend};
  double half_h = (kGlyphH / 2.0 + 1.0) * scale;  // one glyph-pixel margin
  double end_margin = 0.5 * scale;

  InstanceLayout out;
  for (int i = 0; i < n; ++i) {
    double s = (i + 0.5) * cell;
    Pt c = apply_frame(frame, path.point(s));
    double a = frame.heading + path.tangent(s);
    out.glyph_centers.push_back(c);
    out.glyph_angles.push_back(a);
    out.char_boxes.push_back(
        oriented_quad(c, a, (kGlyphW / 2.0 + 0.25) * scale,
                      (kGlyphH / 2.0 + 0.25) * scale));
  }
  // Quad-chain outline: stations at cell boundaries, sides offset by the
  // half height; vertex i pairs with vertex (count-1-i).
  std::vector<double> stations;
  stations.push_back(-end_margin);
  if (bend != 0.0)
    for (int i = 1; i < n; ++i) stations.push_back(i * cell);
  stations.push_back(n * cell + end_margin);
  Polygon upper, lower;
  for (double s : stations) {
    double sc = std::min(std::max(s, 0.0), path.total_len);
    Pt base = path.point(sc);
    double t = path.tangent(sc);
    Pt d = {std::cos(t), std::sin(t)};
    Pt p = {base.x + (s - sc) * d.x, base.y + (s - sc) * d.y};
    Pt nrm = {-d.y, d.x};
    upper.push_back(apply_frame(frame, {p.x - half_h * nrm.x, p.y - half_h * nrm.y}));
    lower.push_back(apply_frame(frame, {p.x + half_h * nrm.x, p.y + half_h * nrm.y}));
  }
  out.polygon = upper;
  out.polygon.insert(out.polygon.end(), lower.rbegin(), lower.rend());
  return out;
}

// Fraction of the pixel covered by glyph ink, estimated on a 3x3 subgrid.
double glyph_coverage(const char* rows, const Pt& pixel_center, const Pt& center,
                      double angle, double scale) {
  double cs = std::cos(angle), sn = std::sin(angle);
  int hit = 0;
  for (int sy = 0; sy < 3; ++sy) {
    for (int sx = 0; sx < 3; ++sx) {
      double px = pixel_center.x + (sx - 1) / 3.0;
      double py = pixel_center.y + (sy - 1) / 3.0;
      // into glyph-local units, origin at glyph center
      double rx = ((px - center.x) * cs + (py - center.y) * sn) / scale;
      double ry = (-(px - center.x) * sn + (py - center.y) * cs) / scale;
      int gx = static_cast<int>(std::floor(rx + kGlyphW / 2.0));
      int gy = static_cast<int>(std::floor(ry + kGlyphH / 2.0));
      if (gx >= 0 && gx < kGlyphW && gy >= 0 && gy < kGlyphH &&
          rows[gy * kGlyphW + gx] == '1')
        ++hit;
    }
  }
  return hit / 9.0;
}

void draw_glyph(Eigen::ArrayXd& img, int h, int w, const char* rows,
                const Pt& center, double angle, double scale, double intensity) {
  double radius = std::hypot(kGlyphW, kGlyphH) * scale / 2.0 + 1.0;
  int y0 = std::max(0, static_cast<int>(std::floor(center.y - radius)));
  int y1 = std::min(h - 1, static_cast<int>(std::ceil(center.y + radius)));
  int x0 = std::max(0, static_cast<int>(std::floor(center.x - radius)));
  int x1 = std::min(w - 1, static_cast<int>(std::ceil(center.x + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double cov = glyph_coverage(rows, {x + 0.5, y + 0.5}, center, angle, scale);
      if (cov > 0) {
        double& v = img[static_cast<long>(y) * w + x];
        v += cov * (intensity - v);
      }
    }
  }
}

bool inside_image(const Polygon& poly, int h, int w, double margin) {
  for (const Pt& p : poly)
    if (p.x < margin || p.y < margin || p.x > w - margin || p.y > h - margin)
      return false;
  return true;
}

}  // namespace

bool glyph_available(char c) { return glyph_rows(c) != nullptr; }

Sample generate(const DatagenConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  for (char c : cfg.alphabet)
    if (!glyph_available(c))
      throw ConfigError(std::string("datagen: no glyph for '") + c + "'");

  std::mt19937_64 rng(derive_seed(seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int h = cfg.image_h, w = cfg.image_w;

  Sample sample;
  Eigen::ArrayXd img =
      Eigen::ArrayXd::Constant(static_cast<long>(h) * w, 0.25);

  int want = cfg.min_instances +
             (cfg.max_instances > cfg.min_instances
                  ? static_cast<int>(rng() % static_cast<std::uint64_t>(
                                         cfg.max_instances - cfg.min_instances + 1))
                  : 0);

  RasterMask occupancy;
  occupancy.height = h;
  occupancy.width = w;
  occupancy.bits.assign(static_cast<size_t>(h) * w, 0);

  std::vector<InstanceLayout> layouts;
  int placed = 0;
  while (placed < want) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      int len = cfg.min_len +
                (cfg.max_len > cfg.min_len
                     ? static_cast<int>(rng() % static_cast<std::uint64_t>(
                                            cfg.max_len - cfg.min_len + 1))
                     : 0);
      std::string transcript;
      for (int i = 0; i < len; ++i)
        transcript += cfg.alphabet[rng() % cfg.alphabet.size()];
      double scale = cfg.glyph_scale;
      double rot = (2.0 * unit(rng) - 1.0) * cfg.rotation_deg * M_PI / 180.0;
      double bend = 0.0;
      if (len >= 3 && unit(rng) < cfg.curvature_prob) {
        bend = (0.35 + 0.5 * unit(rng));  // 20..49 degrees of total bend
        if (unit(rng) < 0.5) bend = -bend;
      }
      Frame frame;
      frame.heading = rot;
      frame.origin = {unit(rng) * w, unit(rng) * h};
      InstanceLayout layout =
          layout_instance(transcript, scale, frame, bend);
      if (!inside_image(layout.polygon, h, w, 2.0)) continue;

      RasterMask m = rasterize(layout.polygon, h, w, 1.0);
      if (m.degenerate || intersection_area(m, occupancy) > 0) continue;

      for (size_t i = 0; i < m.bits.size(); ++i) occupancy.bits[i] |= m.bits[i];
      TextInstance inst;
      inst.polygon = layout.polygon;
      inst.transcript = transcript;
      inst.char_boxes = layout.char_boxes;
      inst.id = placed;
      sample.instances.push_back(std::move(inst));
      layouts.push_back(std::move(layout));
      ok = true;
    }
    if (ok) {
      ++placed;
    } else if (want > cfg.min_instances) {
      --want;  // crowded image: retry with fewer instances
    } else {
      break;  // nothing fits at all (degenerate config); emit what we have
    }
  }

  for (size_t i = 0; i < layouts.size(); ++i) {
    const std::string& transcript = sample.instances[i].transcript;
    for (size_t g = 0; g < transcript.size(); ++g)
      draw_glyph(img, h, w, glyph_rows(transcript[g]),
                 layouts[i].glyph_centers[g], layouts[i].glyph_angles[g],
                 cfg.glyph_scale, 0.95);
  }

  // Short distractor strokes exercise the small-component filter; they
  // avoid the text regions.
  for (int s = 0; s < cfg.distractor_strokes; ++s) {
    double x0 = unit(rng) * w, y0 = unit(rng) * h;
    double ang = unit(rng) * 2 * M_PI;
    double len = 3.0 + unit(rng) * 6.0;
    bool clear = true;
    for (double t = 0; t <= len && clear; t += 0.5) {
      int px = static_cast<int>(x0 + t * std::cos(ang));
      int py = static_cast<int>(y0 + t * std::sin(ang));
      if (px < 0 || px >= w || py < 0 || py >= h ||
          occupancy.bits[static_cast<size_t>(py) * w + px])
        clear = false;
    }
    if (!clear) continue;
    for (double t = 0; t <= len; t += 0.5) {
      int px = static_cast<int>(x0 + t * std::cos(ang));
      int py = static_cast<int>(y0 + t * std::sin(ang));
      double& v = img[static_cast<long>(py) * w + px];
      v += 0.8 * (0.85 - v);
    }
  }

  if (cfg.noise_sigma > 0)
    for (long i = 0; i < img.size(); ++i) img[i] += cfg.noise_sigma * gauss(rng);
  img = img.min(1.0).max(0.0);

  sample.image = Tensor::from_array({1, h, w}, std::move(img));
  return sample;
}

GrayImage to_gray_image(const Tensor& image) {
  if (image.shape().size() != 3 || image.dim(0) != 1)
    throw DimError("to_gray_image: expects [1,H,W]");
  GrayImage g;
  g.height = image.dim(1);
  g.width = image.dim(2);
  g.pixels = image.array();
  return g;
}

Tensor to_tensor(const GrayImage& img) {
  return Tensor::from_array({1, img.height, img.width}, img.pixels);
}

namespace {

json polygon_to_json(const Polygon& poly) {
  json arr = json::array();
  for (const Pt& p : poly) arr.push_back({p.x, p.y});
  return arr;
}

Polygon polygon_from_json(const json& arr, int line) {
  if (!arr.is_array() || arr.size() < 3)
    throw DataError("annotations line " + std::to_string(line) +
                    ": polygon needs >= 3 vertices");
  Polygon poly;
  for (const json& p : arr) {
    if (!p.is_array() || p.size() != 2)
      throw DataError("annotations line " + std::to_string(line) +
                      ": vertex must be [x,y]");
    poly.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return poly;
}

}  // namespace

std::string sample_image_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%06llu.pgm",
                static_cast<unsigned long long>(index));
  return buf;
}

void export_samples(const DatagenConfig& cfg, std::uint64_t seed,
                    std::uint64_t count, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw IoError("cannot write annotations in " + dir);
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s = generate(cfg, seed, i);
    std::string name = sample_image_name(i);
    write_pgm((fs::path(dir) / name).string(), to_gray_image(s.image));
    json line;
    line["image"] = name;
    json instances = json::array();
    for (const TextInstance& inst : s.instances) {
      json ji;
      ji["polygon"] = polygon_to_json(inst.polygon);
      ji["transcript"] = inst.transcript;
      json boxes = json::array();
      for (const Polygon& b : inst.char_boxes) boxes.push_back(polygon_to_json(b));
      ji["char_boxes"] = boxes;
      instances.push_back(std::move(ji));
    }
    line["instances"] = std::move(instances);
    ann << line.dump() << "\n";
  }
  if (!ann) throw IoError("write failed for annotations in " + dir);
}

std::vector<AnnotatedImage> import_annotations(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw IoError("cannot open " + jsonl_path);
  std::vector<AnnotatedImage> out;
  std::string text;
  int lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(jsonl_path + " line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    AnnotatedImage ai;
    if (!j.contains("image") || !j.contains("instances"))
      throw DataError(jsonl_path + " line " + std::to_string(lineno) +
                      ": missing image or instances field");
    ai.image = j["image"].get<std::string>();
    int id = 0;
    for (const json& ji : j["instances"]) {
      TextInstance inst;
      inst.polygon = polygon_from_json(ji.at("polygon"), lineno);
      inst.transcript = ji.at("transcript").get<std::string>();
      if (ji.contains("char_boxes"))
        for (const json& b : ji["char_boxes"])
          inst.char_boxes.push_back(polygon_from_json(b, lineno));
      if (ji.contains("unreadable")) inst.unreadable = ji["unreadable"].get<bool>();
      inst.id = id++;
      inst.validate();
      ai.instances.push_back(std::move(inst));
    }
    out.push_back(std::move(ai));
  }
  return out;
}

std::vector<Sample> load_dataset(const std::string& dir) {
  auto annotations = import_annotations((fs::path(dir) / "annotations.jsonl").string());
  std::vector<Sample> out;
  out.reserve(annotations.size());
  for (const AnnotatedImage& ai : annotations) {
    Sample s;
    s.image = to_tensor(read_image((fs::path(dir) / ai.image).string()));
    s.instances = ai.instances;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gridspot

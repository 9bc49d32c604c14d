#include "gridspot/inference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <nlohmann/json.hpp>

#include "gridspot/pma.hpp"

namespace gridspot {

RasterMask segment_centerline(const Tensor& seg_logits) {
  if (seg_logits.shape().size() != 3 || seg_logits.dim(0) != 1)
    throw DimError("segment_centerline: expects [1,H,W] logits");
  RasterMask mask;
  mask.height = seg_logits.dim(1);
  mask.width = seg_logits.dim(2);
  mask.bits.resize(static_cast<size_t>(mask.height) * mask.width);
  const Eigen::ArrayXd& v = seg_logits.array();
  for (size_t i = 0; i < mask.bits.size(); ++i)
    mask.bits[i] = v[static_cast<long>(i)] >= 0.0 ? 1 : 0;  // sigmoid >= 0.5
  return mask;
}

RasterMask Region::to_mask(int height, int width) const {
  RasterMask m;
  m.height = height;
  m.width = width;
  m.bits.assign(static_cast<size_t>(height) * width, 0);
  for (auto [y, x] : pixels) m.bits[static_cast<size_t>(y) * width + x] = 1;
  return m;
}

std::vector<Region> connected_regions(const RasterMask& mask, int min_area) {
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<Region> out;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      size_t idx = static_cast<size_t>(y) * mask.width + x;
      if (!mask.bits[idx] || seen[idx]) continue;
      Region r;
      r.min_y = r.max_y = y;
      r.min_x = r.max_x = x;
      std::deque<std::pair<int, int>> queue{{y, x}};
      seen[idx] = 1;
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        r.pixels.push_back({cy, cx});
        r.min_y = std::min(r.min_y, cy);
        r.max_y = std::max(r.max_y, cy);
        r.min_x = std::min(r.min_x, cx);
        r.max_x = std::max(r.max_x, cx);
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= mask.height || nx < 0 || nx >= mask.width) continue;
          size_t nidx = static_cast<size_t>(ny) * mask.width + nx;
          if (mask.bits[nidx] && !seen[nidx]) {
            seen[nidx] = 1;
            queue.push_back({ny, nx});
          }
        }
      }
      if (static_cast<int>(r.pixels.size()) >= min_area)
        out.push_back(std::move(r));
    }
  }
  return out;
}

std::pair<std::string, std::vector<double>> weighted_vote(
    const std::vector<Eigen::ArrayXd>& probs, const std::vector<double>& o,
    int L, int M, const CharDictionary& dict) {
  if (probs.size() != o.size() || probs.empty())
    throw UsageError("weighted_vote: probs/weights mismatch or empty");
  double o_sum = 0;
  for (double w : o) o_sum += w;
  std::string transcript;
  std::vector<double> confidences;
  for (int k = 0; k < L; ++k) {
    int best = 0;
    double best_score = -1;
    for (int c = 0; c < M; ++c) {
      double score = 0;
      for (size_t j = 0; j < probs.size(); ++j)
        score += o[j] * probs[j][static_cast<long>(k) * M + c];
      if (score > best_score) {  // ties keep the smaller class index
        best_score = score;
        best = c;
      }
    }
    if (best == dict.eos_index()) break;
    transcript += dict.symbol(best);
    confidences.push_back(best_score / o_sum);
  }
  return {transcript, confidences};
}

namespace {

// softmax over the class axis of flat [N, L, M] logits, done outside the
// tape (inference only).
std::vector<Eigen::ArrayXd> per_grid_probs(const Tensor& logits) {
  int n = logits.dim(0), L = logits.dim(1), M = logits.dim(2);
  const Eigen::ArrayXd& v = logits.array();
  std::vector<Eigen::ArrayXd> out;
  out.reserve(static_cast<size_t>(n));
  for (int g = 0; g < n; ++g) {
    Eigen::ArrayXd p(static_cast<long>(L) * M);
    for (int k = 0; k < L; ++k) {
      long base = (static_cast<long>(g) * L + k) * M;
      Eigen::ArrayXd row = v.segment(base, M);
      row = (row - row.maxCoeff()).exp();
      p.segment(static_cast<long>(k) * M, M) = row / row.sum();
    }
    out.push_back(std::move(p));
  }
  return out;
}

double overall_confidence(const std::vector<double>& confs) {
  if (confs.empty()) return 1.0;
  double s = 0;
  for (double c : confs) s += c;
  return s / static_cast<double>(confs.size());
}

}  // namespace

SpotOutput spot(const SpotterModel& model, const Tensor& image) {
  autograd::NoGradGuard no_grad;
  const RunConfig& cfg = model.cfg;
  Tensor x = model.features(image);
  int fh = x.dim(1), fw = x.dim(2);
  const CharDictionary& dict = model.dict;

  SpotOutput out;
  Tensor ima_logits = ima_forward(x, model.pma.ima_kernels);

  if (cfg.S == 1 && !cfg.use_seg_head) {
    Tensor cma = cma_forward(x, ima_logits, model.pma, {0}, cfg.L);
    Tensor fused = attention_fuse(cma, x, cfg.L, cfg.normalize_attention);
    Tensor logits = decode(fused, model.decoder);
    auto probs = per_grid_probs(logits);
    auto [transcript, confs] =
        weighted_vote({probs[0]}, {1.0}, cfg.L, dict.size(), dict);
    SpotResult r;
    r.region_id = 0;
    r.transcript = transcript;
    r.char_confidences = confs;
    r.best_grid = {0, 0};
    r.region_bbox = {0, 0, fw * 4, fh * 4};
    r.contributing_grids = {{0, 1.0}};
    out.results.push_back(std::move(r));
    return out;
  }

  RasterMask mask = segment_centerline(model.seg_logits(x));
  std::vector<Region> regions = connected_regions(mask, cfg.min_region_area);
  GridSpec grid{cfg.S, fh, fw};

  // occupation ratios per region, then the union of contributing grids
  std::vector<std::vector<std::pair<int, double>>> ratios(regions.size());
  std::vector<int> positive;
  for (size_t i = 0; i < regions.size(); ++i) {
    RasterMask rm = regions[i].to_mask(fh, fw);
    for (int ch = 0; ch < cfg.S * cfg.S; ++ch) {
      double o = occupation_ratio(rm, grid.cell_mask(ch));
      if (o > cfg.mu_infer) {
        ratios[i].push_back({ch, o});
        positive.push_back(ch);
      }
    }
  }
  std::sort(positive.begin(), positive.end());
  positive.erase(std::unique(positive.begin(), positive.end()), positive.end());

  std::vector<Eigen::ArrayXd> probs;
  if (!positive.empty()) {
    Tensor cma = cma_forward(x, ima_logits, model.pma, positive, cfg.L);
    Tensor fused = attention_fuse(cma, x, cfg.L, cfg.normalize_attention);
    probs = per_grid_probs(decode(fused, model.decoder));
  }
  auto grid_row = [&](int channel) {
    return static_cast<size_t>(
        std::lower_bound(positive.begin(), positive.end(), channel) -
        positive.begin());
  };

  for (size_t i = 0; i < regions.size(); ++i) {
    if (ratios[i].empty()) {
      ++out.dropped_regions;
      continue;
    }
    std::vector<Eigen::ArrayXd> region_probs;
    std::vector<double> weights;
    int best_channel = ratios[i][0].first;
    double best_o = ratios[i][0].second;
    for (auto [ch, o] : ratios[i]) {
      region_probs.push_back(probs[grid_row(ch)]);
      weights.push_back(o);
      if (o > best_o) {
        best_o = o;
        best_channel = ch;
      }
    }
    auto [transcript, confs] =
        weighted_vote(region_probs, weights, cfg.L, dict.size(), dict);
    SpotResult r;
    r.region_id = static_cast<int>(out.results.size());
    r.transcript = transcript;
    r.char_confidences = confs;
    r.best_grid = channel_to_grid(best_channel, cfg.S);
    r.region_bbox = {regions[i].min_x * 4, regions[i].min_y * 4,
                     (regions[i].max_x + 1) * 4, (regions[i].max_y + 1) * 4};
    r.contributing_grids = ratios[i];
    out.results.push_back(std::move(r));
  }
  return out;
}

GrayImage cma_overlay(const Tensor& cma_logits_full, int k, int L) {
  if (cma_logits_full.shape().size() != 3)
    throw DimError("cma_overlay: expects [S^2*L,H,W] logits");
  int channels = cma_logits_full.dim(0);
  int h = cma_logits_full.dim(1), w = cma_logits_full.dim(2);
  if (k < 0 || k >= L || channels % L != 0)
    throw UsageError("cma_overlay: slot index out of range");
  long plane = static_cast<long>(h) * w;
  const Eigen::ArrayXd& v = cma_logits_full.array();
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(plane);
  for (int g = 0; g < channels / L; ++g) {
    Eigen::ArrayXd logit = v.segment((static_cast<long>(g) * L + k) * plane, plane);
    acc += 0.5 * (1.0 + (0.5 * logit).tanh());  // sigmoid
  }
  GrayImage img;
  img.height = h;
  img.width = w;
  double lo = acc.minCoeff(), hi = acc.maxCoeff();
  img.pixels = hi > lo ? ((acc - lo) / (hi - lo)).eval()
                       : Eigen::ArrayXd::Constant(plane, 0.5);
  return img;
}

nlohmann::json results_json(const std::string& image_name, const SpotOutput& out) {
  nlohmann::json j;
  j["image"] = image_name;
  nlohmann::json results = nlohmann::json::array();
  for (const SpotResult& r : out.results) {
    results.push_back(
        {{"bbox", r.region_bbox},
         {"transcript", r.transcript},
         {"confidence", overall_confidence(r.char_confidences)},
         {"best_grid", {r.best_grid.first, r.best_grid.second}}});
  }
  j["results"] = std::move(results);
  return j;
}

}  // namespace gridspot

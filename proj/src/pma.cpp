#include "gridspot/pma.hpp"

#include <algorithm>

namespace gridspot {

int grid_to_channel(int h, int w, int S) {
  if (h < 0 || h >= S || w < 0 || w >= S)
    throw UsageError("grid_to_channel: index out of range");
  return h * S + w;
}

std::pair<int, int> channel_to_grid(int channel, int S) {
  if (channel < 0 || channel >= S * S)
    throw UsageError("channel_to_grid: channel out of range");
  return {channel / S, channel % S};
}

int char_channel(int h, int w, int k, int S, int L) {
  if (k < 0 || k >= L) throw UsageError("char_channel: slot out of range");
  return grid_to_channel(h, w, S) * L + k;
}

std::tuple<int, int, int> char_channel_to_grid(int channel, int S, int L) {
  if (channel < 0 || channel >= S * S * L)
    throw UsageError("char_channel_to_grid: channel out of range");
  auto [h, w] = channel_to_grid(channel / L, S);
  return {h, w, channel % L};
}

PMAParams PMAParams::init(const PMAConfig& cfg, std::mt19937_64& rng) {
  if (cfg.S < 1 || cfg.L < 1 || cfg.C < 1 || cfg.c_mid < 1)
    throw ConfigError("pma: S, L, C, c_mid must all be >= 1");
  int s2 = cfg.S * cfg.S;
  int cat = s2 + cfg.C;
  PMAParams p;
  p.ima_kernels = xavier_uniform({s2, cfg.C, 1, 1}, cfg.C, s2, rng);
  p.cma_w1 = xavier_uniform({cfg.c_mid, cat, 3, 3}, cat * 9, cfg.c_mid * 9, rng);
  p.cma_b1 = Tensor::zeros({cfg.c_mid}, true);
  p.cma_w2 = xavier_uniform({s2 * cfg.L, cfg.c_mid, 3, 3}, cfg.c_mid * 9,
                            s2 * cfg.L * 9, rng);
  p.cma_b2 = Tensor::zeros({s2 * cfg.L}, true);
  return p;
}

void PMAParams::register_params(ParamMap& out) const {
  out.emplace_back("ima.kernels", ima_kernels);
  out.emplace_back("cma.conv1.weight", cma_w1);
  out.emplace_back("cma.conv1.bias", cma_b1);
  out.emplace_back("cma.conv2.weight", cma_w2);
  out.emplace_back("cma.conv2.bias", cma_b2);
}

Tensor ima_forward(const Tensor& x, const Tensor& ima_kernels) {
  return conv2d(x, ima_kernels, Tensor(), 1, 0);
}

std::vector<int> select_positive(const MatchResult& assignment) {
  std::vector<int> grids;
  for (const auto& [channel, gm] : assignment.grid_to_instance)
    grids.push_back(channel);  // map iteration is already ascending
  return grids;
}

std::vector<int> select_positive(const std::vector<std::pair<int, double>>& ratios,
                                 double mu) {
  std::vector<int> grids;
  for (const auto& [channel, o] : ratios)
    if (o > mu) grids.push_back(channel);
  std::sort(grids.begin(), grids.end());
  grids.erase(std::unique(grids.begin(), grids.end()), grids.end());
  return grids;
}

namespace {

Tensor cma_hidden(const Tensor& x, const Tensor& ima_logits,
                  const PMAParams& params) {
  Tensor cat = concat0({sigmoid(ima_logits), x});
  return relu(conv2d(cat, params.cma_w1, params.cma_b1, 1, 1));
}

}  // namespace

Tensor cma_forward(const Tensor& x, const Tensor& ima_logits,
                   const PMAParams& params, const std::vector<int>& positive_grids,
                   int L) {
  if (positive_grids.empty())
    throw UsageError("cma_forward: no positive grids (skip decoding instead)");
  Tensor h = cma_hidden(x, ima_logits, params);
  std::vector<int> rows;
  rows.reserve(positive_grids.size() * static_cast<size_t>(L));
  for (int j : positive_grids)
    for (int k = 0; k < L; ++k) rows.push_back(j * L + k);
  Tensor w2 = gather0(params.cma_w2, rows);
  Tensor b2 = gather0(params.cma_b2, rows);
  return conv2d(h, w2, b2, 1, 1);
}

Tensor cma_forward_full(const Tensor& x, const Tensor& ima_logits,
                        const PMAParams& params) {
  Tensor h = cma_hidden(x, ima_logits, params);
  return conv2d(h, params.cma_w2, params.cma_b2, 1, 1);
}

}  // namespace gridspot

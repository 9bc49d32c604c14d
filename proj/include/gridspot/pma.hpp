#pragma once

#include "gridspot/geometry.hpp"
#include "gridspot/params.hpp"
#include "gridspot/tensor.hpp"

namespace gridspot {

// Grid/channel index arithmetic (0-based; the +1 shift maps to 1-based
// row/column/channel numbering).
int grid_to_channel(int h, int w, int S);
std::pair<int, int> channel_to_grid(int channel, int S);
int char_channel(int h, int w, int k, int S, int L);
std::tuple<int, int, int> char_channel_to_grid(int channel, int S, int L);

struct PMAConfig {
  int S = 4;      // grid count per side
  int L = 8;      // max transcript length
  int C = 16;     // backbone feature channels
  int c_mid = 32; // hidden width of the two-conv character head
};

struct PMAParams {
  Tensor ima_kernels;        // [S^2, C, 1, 1]
  Tensor cma_w1, cma_b1;     // [c_mid, S^2 + C, 3, 3]
  Tensor cma_w2, cma_b2;     // [S^2 * L, c_mid, 3, 3]

  static PMAParams init(const PMAConfig& cfg, std::mt19937_64& rng);
  void register_params(ParamMap& out) const;
};

// Instance attention logits: channel j is the 1x1 convolution of x with
// kernel j.
Tensor ima_forward(const Tensor& x, const Tensor& ima_kernels);

// Ascending grid indices occupied during training (from grid matching).
std::vector<int> select_positive(const MatchResult& assignment);
// Inference-side variant: grids whose ratio against a region exceeds mu.
std::vector<int> select_positive(const std::vector<std::pair<int, double>>& ratios,
                                 double mu);

// Character attention logits for the positive grids only: the full head is
// conv(3x3) -> relu -> conv(3x3) on concat(sigmoid(ima_logits), x), but the
// second conv is evaluated only for the N*L kernel rows that belong to
// positive grids. Returns [N*L, H, W].
Tensor cma_forward(const Tensor& x, const Tensor& ima_logits,
                   const PMAParams& params, const std::vector<int>& positive_grids,
                   int L);

// Full (unselected) head, used by tests as the gather oracle.
Tensor cma_forward_full(const Tensor& x, const Tensor& ima_logits,
                        const PMAParams& params);

}  // namespace gridspot

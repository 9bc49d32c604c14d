#include "gridspot/seq_decoder.hpp"

#include <set>

namespace gridspot {

CharDictionary CharDictionary::from_symbols(const std::string& symbols) {
  if (symbols.empty()) throw ConfigError("dictionary: empty symbol list");
  std::set<char> seen(symbols.begin(), symbols.end());
  if (seen.size() != symbols.size())
    throw ConfigError("dictionary: duplicate symbols");
  CharDictionary d;
  d.symbols_ = symbols;
  return d;
}

CharDictionary CharDictionary::digits4() { return from_symbols("0123456789ABCD"); }

CharDictionary CharDictionary::full69() {
  std::string s;
  for (char c = 'a'; c <= 'z'; ++c) s += c;
  for (char c = '0'; c <= '9'; ++c) s += c;
  s += "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";  // the 32 ASCII punctuation marks
  return from_symbols(s);
}

int CharDictionary::index_of(char c) const {
  size_t pos = symbols_.find(c);
  if (pos == std::string::npos)
    throw DataError(std::string("dictionary: unknown character '") + c + "'");
  return static_cast<int>(pos);
}

char CharDictionary::symbol(int index) const {
  if (index < 0 || index >= static_cast<int>(symbols_.size()))
    throw UsageError("dictionary: symbol index out of range");
  return symbols_[static_cast<size_t>(index)];
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.hidden < 1 || cfg.in_channels < 1 || cfg.num_classes < 2 ||
      cfg.layers < 1)
    throw ConfigError("decoder: bad config");
  DecoderParams p;
  p.cfg = cfg;
  int d = cfg.hidden;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    int in = layer == 0 ? cfg.in_channels : 2 * d;
    for (auto* side : {&p.fwd, &p.bwd}) {
      Cell cell;
      cell.wx = xavier_uniform({in, 4 * d}, in, 4 * d, rng);
      cell.wh = xavier_uniform({d, 4 * d}, d, 4 * d, rng);
      // forget-gate bias starts at 1 so early training passes state through
      Eigen::ArrayXd b = Eigen::ArrayXd::Zero(4 * d);
      b.segment(d, d) = 1.0;
      cell.b = Tensor::from_array({4 * d}, std::move(b), true);
      side->push_back(std::move(cell));
    }
  }
  p.fc_w = xavier_uniform({2 * d, cfg.num_classes}, 2 * d, cfg.num_classes, rng);
  p.fc_b = Tensor::zeros({cfg.num_classes}, true);
  return p;
}

void DecoderParams::register_params(ParamMap& out) const {
  for (size_t layer = 0; layer < fwd.size(); ++layer) {
    for (auto [side, cells] : {std::pair{"fwd", &fwd}, std::pair{"bwd", &bwd}}) {
      std::string base =
          "decoder.layer" + std::to_string(layer) + "." + side;
      const Cell& c = (*cells)[layer];
      out.emplace_back(base + ".wx", c.wx);
      out.emplace_back(base + ".wh", c.wh);
      out.emplace_back(base + ".b", c.b);
    }
  }
  out.emplace_back("decoder.fc.weight", fc_w);
  out.emplace_back("decoder.fc.bias", fc_b);
}

Tensor attention_fuse(const Tensor& cma_logits, const Tensor& x, int L,
                      bool normalize, double eps) {
  if (cma_logits.shape().size() != 3 || x.shape().size() != 3)
    throw DimError("attention_fuse: expects [N*L,H,W] and [C,H,W]");
  int h = x.dim(1), w = x.dim(2);
  if (cma_logits.dim(1) != h || cma_logits.dim(2) != w)
    throw DimError("attention_fuse: spatial dims disagree");
  int nl = cma_logits.dim(0);
  if (L < 1 || nl % L != 0)
    throw DimError("attention_fuse: channel count not a multiple of L");
  int c = x.dim(0);
  int hw = h * w;
  Tensor a = sigmoid(reshape(cma_logits, {nl, hw}));
  if (normalize) a = row_normalize(a, eps);
  Tensor fused = matmul(a, transpose2d(reshape(x, {c, hw})));  // [N*L, C]
  return reshape(fused, {nl / L, L, c});
}

namespace {

// One directional LSTM pass; returns per-step hidden states in time order.
std::vector<Tensor> lstm_pass(const Tensor& input, const DecoderParams::Cell& cell,
                              int d, bool reverse) {
  int n = input.dim(0), steps = input.dim(1);
  Tensor h = Tensor::zeros({n, d});
  Tensor c = Tensor::zeros({n, d});
  std::vector<Tensor> out(static_cast<size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    int t = reverse ? steps - 1 - s : s;
    Tensor xt = select1(input, t);
    Tensor gates = linear(xt, cell.wx, cell.b) + matmul(h, cell.wh);
    Tensor i = sigmoid(slice_cols(gates, 0, d));
    Tensor f = sigmoid(slice_cols(gates, d, 2 * d));
    Tensor g = tanh_op(slice_cols(gates, 2 * d, 3 * d));
    Tensor o = sigmoid(slice_cols(gates, 3 * d, 4 * d));
    c = f * c + i * g;
    h = o * tanh_op(c);
    out[static_cast<size_t>(t)] = h;
  }
  return out;
}

}  // namespace

Tensor decode(const Tensor& x_seq, const DecoderParams& params) {
  if (x_seq.shape().size() != 3) throw DimError("decode: expects [N,L,C]");
  int n = x_seq.dim(0), steps = x_seq.dim(1);
  if (n < 1) throw DimError("decode: empty batch");
  if (x_seq.dim(2) != params.cfg.in_channels)
    throw DimError("decode: feature width mismatch");
  int d = params.cfg.hidden;

  Tensor layer_in = x_seq;
  for (size_t layer = 0; layer < params.fwd.size(); ++layer) {
    auto hf = lstm_pass(layer_in, params.fwd[layer], d, false);
    auto hb = lstm_pass(layer_in, params.bwd[layer], d, true);
    std::vector<Tensor> merged(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      Tensor cat = concat0({transpose2d(hf[static_cast<size_t>(t)]),
                            transpose2d(hb[static_cast<size_t>(t)])});
      merged[static_cast<size_t>(t)] = transpose2d(cat);  // [N, 2D]
    }
    layer_in = stack1(merged);  // [N, L, 2D]
  }
  Tensor flat = reshape(layer_in, {n * steps, 2 * d});
  Tensor logits = linear(flat, params.fc_w, params.fc_b);
  return reshape(logits, {n, steps, params.cfg.num_classes});
}

std::vector<int> targets_from_transcript(const std::string& transcript,
                                         const CharDictionary& dict, int L) {
  if (static_cast<int>(transcript.size()) > L)
    throw DataError("transcript \"" + transcript + "\" longer than L=" +
                    std::to_string(L));
  std::vector<int> out;
  out.reserve(static_cast<size_t>(L));
  for (char c : transcript) out.push_back(dict.index_of(c));
  while (static_cast<int>(out.size()) < L) out.push_back(dict.eos_index());
  return out;
}

}  // namespace gridspot

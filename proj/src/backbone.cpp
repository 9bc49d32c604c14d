#include "gridspot/backbone.hpp"

namespace gridspot {

void BackboneConfig::validate() const {
  if (in_channels < 1) throw ConfigError("backbone: in_channels must be >= 1");
  if (stage_channels.size() < 2)
    throw ConfigError("backbone: need at least two stages for stride 4");
  for (int c : stage_channels)
    if (c < 1) throw ConfigError("backbone: stage channel count must be >= 1");
}

Backbone Backbone::init(const BackboneConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Backbone b;
  b.cfg = cfg;
  int cin = cfg.in_channels;
  for (int cout : cfg.stage_channels) {
    b.weights.push_back(xavier_uniform({cout, cin, 3, 3}, cin * 9, cout * 9, rng));
    b.biases.push_back(Tensor::zeros({cout}, true));
    cin = cout;
  }
  return b;
}

Tensor Backbone::extract(const Tensor& image) const {
  if (image.shape().size() != 3 || image.dim(0) != cfg.in_channels)
    throw DimError("backbone: expected image [" +
                   std::to_string(cfg.in_channels) + ",H,W], got " +
                   shape_str(image.shape()));
  if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0)
    throw ConfigError("backbone: image dims must be divisible by 4");
  Tensor h = image;
  for (size_t i = 0; i < weights.size(); ++i) {
    int stride = i < 2 ? 2 : 1;
    h = relu(conv2d(h, weights[i], biases[i], stride, 1));
  }
  return h;
}

void Backbone::register_params(ParamMap& out) const {
  for (size_t i = 0; i < weights.size(); ++i) {
    std::string base = "backbone.stage" + std::to_string(i);
    out.emplace_back(base + ".weight", weights[i]);
    out.emplace_back(base + ".bias", biases[i]);
  }
}

}  // namespace gridspot

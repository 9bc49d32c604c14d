#pragma once

#include <string>
#include <vector>

#include "gridspot/config.hpp"
#include "gridspot/geometry.hpp"
#include "gridspot/image_io.hpp"
#include "gridspot/tensor.hpp"

namespace gridspot {

struct Sample {
  Tensor image;  // [1, H, W], values in [0,1]
  std::vector<TextInstance> instances;
};

// 5x7 bitmap glyphs for digits and letters (lowercase shares the
// uppercase shapes).
bool glyph_available(char c);

// Pure function of (config, seed, index): same arguments, same sample.
Sample generate(const DatagenConfig& cfg, std::uint64_t seed, std::uint64_t index);

GrayImage to_gray_image(const Tensor& image);
Tensor to_tensor(const GrayImage& img);

// On-disk form: one PGM per sample plus one JSON-lines annotation file.
struct AnnotatedImage {
  std::string image;  // file name relative to the annotation file
  std::vector<TextInstance> instances;
};

std::string sample_image_name(std::uint64_t index);
void export_samples(const DatagenConfig& cfg, std::uint64_t seed,
                    std::uint64_t count, const std::string& dir);
std::vector<AnnotatedImage> import_annotations(const std::string& jsonl_path);

// Loads annotations + images into memory for training.
std::vector<Sample> load_dataset(const std::string& dir);

}  // namespace gridspot

#pragma once

#include <Eigen/Dense>
#include <string>

#include "gridspot/common.hpp"

namespace gridspot {

struct GrayImage {
  int height = 0, width = 0;
  Eigen::ArrayXd pixels;  // row-major, values in [0,1]
};

// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

// 8-bit grayscale non-interlaced PNG.
void write_png(const std::string& path, const GrayImage& img);
GrayImage read_png(const std::string& path);

// Dispatch on file extension (.pgm / .png).
GrayImage read_image(const std::string& path);

}  // namespace gridspot

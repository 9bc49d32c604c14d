#pragma once

#include <string>
#include <vector>

#include "gridspot/config.hpp"
#include "gridspot/model.hpp"

namespace gridspot {

// On-disk model state. Layout: 8-byte magic with format version, 32-bit
// header length, JSON header (config snapshot, dictionary, manifest of
// name -> shape -> byte offset, iteration counter), then all buffers as
// little-endian 64-bit floats in manifest order, then a CRC-32 of that
// payload. Optimizer momentum rides along under its own manifest so an
// interrupted run resumes exactly.
struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  Eigen::ArrayXd values;
};

struct Checkpoint {
  RunConfig cfg;
  std::int64_t iter = 0;
  std::vector<CheckpointEntry> params;
  std::vector<CheckpointEntry> momentum;  // empty for fresh/final checkpoints
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Verifies magic, version, and checksum; corrupt files refuse to load.
Checkpoint load_checkpoint(const std::string& path);

// Capture the model's parameters (manifest order).
Checkpoint snapshot(const SpotterModel& model, std::int64_t iter);
// Rebuild a model from the stored config and copy parameters in; rejects
// manifests whose names or shapes disagree with the config-derived model.
SpotterModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gridspot

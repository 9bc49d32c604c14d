#pragma once

#include <ostream>
#include <vector>

#include "gridspot/checkpoint.hpp"
#include "gridspot/datagen.hpp"
#include "gridspot/model.hpp"

namespace gridspot {

// Learning rate after the decay schedule has been applied up to and
// including `iter` (pure function, so a resumed run sees the same rate).
double lr_at(const TrainConfig& cfg, std::int64_t iter);

// Training sample picked at iteration `iter`, accumulation slot `slot`
// (pure function of the seed for reproducible resume).
std::size_t sample_index(std::uint64_t seed, std::int64_t iter, int slot,
                         std::size_t dataset_size);

// SGD with momentum and weight decay over [start_iter, max_iters).
// Mutates the model in place. `momentum` holds one buffer per model
// parameter in manifest order; pass an empty vector to start cold.
// Writes one `iter,loss_total,loss_cls,loss_I,loss_C,loss_recog` line per
// iteration plus '#'-prefixed schedule/progress lines. A non-finite loss
// aborts with a diagnostic naming the first bad component.
void train(SpotterModel& model, const std::vector<Sample>& dataset,
           std::vector<Eigen::ArrayXd>& momentum, std::int64_t start_iter,
           std::ostream& log);

// Momentum buffers <-> named checkpoint entries (manifest order).
std::vector<CheckpointEntry> momentum_entries(
    const SpotterModel& model, const std::vector<Eigen::ArrayXd>& momentum);
std::vector<Eigen::ArrayXd> momentum_from_entries(
    const SpotterModel& model, const std::vector<CheckpointEntry>& entries);

}  // namespace gridspot

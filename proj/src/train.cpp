#include "gridspot/train.hpp"

#include <cmath>
#include <cstdio>

namespace gridspot {

namespace {

const char* first_bad_component(const SpotterModel::TrainStepOut& out) {
  if (!std::isfinite(out.cls)) return "loss_cls";
  if (!std::isfinite(out.ima)) return "loss_I";
  if (!std::isfinite(out.cma)) return "loss_C";
  if (!std::isfinite(out.recog)) return "loss_recog";
  if (!std::isfinite(out.total.item())) return "loss_total";
  return nullptr;
}

// %.17g round-trips doubles, keeping logs byte-identical across runs.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double lr_at(const TrainConfig& cfg, std::int64_t iter) {
  double lr = cfg.lr;
  for (int step : cfg.decay_steps)
    if (iter >= step) lr /= cfg.lr_decay;
  return lr;
}

std::size_t sample_index(std::uint64_t seed, std::int64_t iter, int slot,
                         std::size_t dataset_size) {
  std::uint64_t key = static_cast<std::uint64_t>(iter) * 0x10000ULL +
                      static_cast<std::uint64_t>(slot);
  return derive_seed(seed ^ 0x747261696eULL, key) % dataset_size;
}

void train(SpotterModel& model, const std::vector<Sample>& dataset,
           std::vector<Eigen::ArrayXd>& momentum, std::int64_t start_iter,
           std::ostream& log) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  const TrainConfig& tc = model.cfg.train;
  Phase base_phase = phase_from_string(tc.phase);

  ParamMap params = model.params();
  if (momentum.empty()) {
    momentum.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      momentum[i] = Eigen::ArrayXd::Zero(params[i].second.size());
  } else if (momentum.size() != params.size()) {
    throw DataError("momentum state does not match the parameter manifest");
  }

  double window_total = 0;
  std::int64_t window_count = 0;
  for (std::int64_t iter = start_iter; iter < tc.max_iters; ++iter) {
    Phase phase = base_phase;
    if (tc.drop_char_losses_after >= 0 && iter >= tc.drop_char_losses_after)
      phase = Phase::finetune;

    for (auto& [name, p] : params) p.zero_grad();
    double total = 0, cls = 0, ima = 0, cma = 0, recog = 0;
    for (int slot = 0; slot < tc.batch_size; ++slot) {
      const Sample& s =
          dataset[sample_index(model.cfg.seed, iter, slot, dataset.size())];
      auto out = model.forward_loss(s.image, s.instances, phase);
      if (const char* bad = first_bad_component(out))
        throw NumericError(std::string(bad) + " became non-finite at iteration " +
                           std::to_string(iter));
      backward(out.total, /*accumulate_leaf=*/true);
      total += out.total.item();
      cls += out.cls;
      ima += out.ima;
      cma += out.cma;
      recog += out.recog;
    }
    double inv = 1.0 / tc.batch_size;
    total *= inv;
    cls *= inv;
    ima *= inv;
    cma *= inv;
    recog *= inv;

    double lr = lr_at(tc, iter);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i].second;
      Eigen::ArrayXd g = p.grad() * inv + tc.weight_decay * p.array();
      momentum[i] = tc.momentum * momentum[i] + g;
      p.array() -= lr * momentum[i];
    }

    log << iter << ',' << fmt(total) << ',' << fmt(cls) << ',' << fmt(ima)
        << ',' << fmt(cma) << ',' << fmt(recog) << '\n';
    for (int step : tc.decay_steps)
      if (iter == step) log << "# iter=" << iter << " lr=" << fmt(lr) << "\n";

    window_total += total;
    ++window_count;
    if ((iter + 1) % tc.eval_every == 0) {
      log << "# iter=" << (iter + 1) << " lr=" << fmt(lr_at(tc, iter + 1))
          << " mean_total=" << fmt(window_total / window_count) << "\n";
      window_total = 0;
      window_count = 0;
    }
  }
}

std::vector<CheckpointEntry> momentum_entries(
    const SpotterModel& model, const std::vector<Eigen::ArrayXd>& momentum) {
  ParamMap params = model.params();
  if (momentum.size() != params.size())
    throw UsageError("momentum state does not match the parameter manifest");
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back({params[i].first, params[i].second.shape(), momentum[i]});
  return out;
}

std::vector<Eigen::ArrayXd> momentum_from_entries(
    const SpotterModel& model, const std::vector<CheckpointEntry>& entries) {
  if (entries.empty()) return {};
  ParamMap params = model.params();
  if (entries.size() != params.size())
    throw DataError("checkpoint momentum does not match the parameter manifest");
  std::vector<Eigen::ArrayXd> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (entries[i].name != params[i].first ||
        entries[i].values.size() != params[i].second.size())
      throw DataError("checkpoint momentum entry " + entries[i].name +
                      " does not match the model");
    out.push_back(entries[i].values);
  }
  return out;
}

}  // namespace gridspot

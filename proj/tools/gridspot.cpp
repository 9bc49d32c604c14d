#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "gridspot/checkpoint.hpp"
#include "gridspot/datagen.hpp"
#include "gridspot/evalkit.hpp"
#include "gridspot/inference.hpp"
#include "gridspot/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridspot;

namespace {

int run_gen(const std::string& config_path, int count, const std::string& out_dir) {
  RunConfig cfg = load_config_file(config_path);
  if (count < 0) throw UsageError("--count must be >= 0");
  export_samples(cfg.datagen, cfg.seed, static_cast<std::uint64_t>(count), out_dir);
  std::cout << "wrote " << count << " samples to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, const std::string& resume_path,
              std::string log_path) {
  RunConfig cfg = load_config_file(config_path);
  std::vector<Sample> dataset = load_dataset(data_dir);

  SpotterModel model = SpotterModel::init(cfg);
  std::vector<Eigen::ArrayXd> momentum;
  std::int64_t start_iter = 0;
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    model = model_from_checkpoint(ckpt);
    model.cfg.train = cfg.train;  // the new schedule says how far to go
    momentum = momentum_from_entries(model, ckpt.momentum);
    start_iter = ckpt.iter;
  }

  if (log_path.empty()) log_path = out_path + ".log";
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write metrics log " + log_path);
  train(model, dataset, momentum, start_iter, log);

  Checkpoint out = snapshot(model, model.cfg.train.max_iters);
  out.momentum = momentum_entries(model, momentum);
  save_checkpoint(out_path, out);
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

std::vector<fs::path> list_images(const std::string& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int run_spot(const std::string& ckpt_path, const std::string& images_dir,
             const std::string& out_path, const std::string& viz_dir) {
  SpotterModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  if (!viz_dir.empty()) fs::create_directories(viz_dir);

  int dropped = 0;
  for (const fs::path& file : list_images(images_dir)) {
    Tensor image = to_tensor(read_image(file.string()));
    SpotOutput result = spot(model, image);
    dropped += result.dropped_regions;
    out << results_json(file.filename().string(), result).dump() << "\n";

    if (!viz_dir.empty()) {
      autograd::NoGradGuard no_grad;
      std::string stem = file.stem().string();
      Tensor x = model.features(image);
      if (model.seg) {
        RasterMask mask = segment_centerline(model.seg_logits(x));
        GrayImage mimg;
        mimg.height = mask.height;
        mimg.width = mask.width;
        mimg.pixels.resize(static_cast<long>(mask.height) * mask.width);
        for (long i = 0; i < mimg.pixels.size(); ++i)
          mimg.pixels[i] = mask.bits[static_cast<size_t>(i)];
        write_pgm((fs::path(viz_dir) / (stem + "_centerline.pgm")).string(), mimg);
      }
      Tensor ima = ima_forward(x, model.pma.ima_kernels);
      Tensor cma = cma_forward_full(x, ima, model.pma);
      for (int k = 0; k < model.cfg.L; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "_slot%02d.pgm", k);
        write_pgm((fs::path(viz_dir) / (stem + name)).string(),
                  cma_overlay(cma, k, model.cfg.L));
      }
    }
  }
  std::cout << "results written to " << out_path;
  if (dropped > 0) std::cout << " (" << dropped << " region(s) dropped)";
  std::cout << "\n";
  return 0;
}

json parse_jsonl_line(const std::string& path, const std::string& text, int line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path + " line " + std::to_string(line) + ": " + e.what());
  }
}

int run_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& config_path) {
  RunConfig cfg = load_config_file(config_path);

  std::map<std::string, std::vector<EvalGroundTruth>> gt_by_image;
  for (const AnnotatedImage& ai : import_annotations(gt_path)) {
    std::vector<EvalGroundTruth>& gts = gt_by_image[ai.image];
    for (const TextInstance& inst : ai.instances)
      gts.push_back({inst.polygon, inst.transcript, inst.unreadable});
  }

  std::map<std::string, std::vector<EvalPrediction>> pred_by_image;
  std::ifstream in(pred_path);
  if (!in) throw IoError("cannot open " + pred_path);
  std::string text;
  int lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (text.empty()) continue;
    json j = parse_jsonl_line(pred_path, text, lineno);
    std::string image = j.at("image").get<std::string>();
    if (!gt_by_image.count(image)) {
      if (!fs::exists(fs::path(gt_path).parent_path() / image))
        throw DataError(pred_path + " line " + std::to_string(lineno) +
                        ": image " + image + " has no annotations and no file");
      std::cerr << "warning: " << image
                << " has no annotations; counting its predictions as false "
                   "positives\n";
      gt_by_image[image];  // empty ground truth
    }
    for (const json& r : j.at("results")) {
      EvalPrediction p;
      auto bbox = r.at("bbox").get<std::vector<int>>();
      if (bbox.size() != 4)
        throw DataError(pred_path + " line " + std::to_string(lineno) +
                        ": bbox must have 4 entries");
      std::copy(bbox.begin(), bbox.end(), p.bbox.begin());
      p.transcript = r.at("transcript").get<std::string>();
      pred_by_image[image].push_back(std::move(p));
    }
  }

  int h = cfg.datagen.image_h, w = cfg.datagen.image_w;
  std::printf("%-14s %-9s %-9s %-9s\n", "protocol", "precision", "recall",
              "hmean");
  for (const char* protocol : {"end_to_end", "word_spotting"}) {
    EvalConfig ec = cfg.eval;
    ec.protocol = protocol;
    std::vector<Pairing> pairings;
    for (const auto& [image, gts] : gt_by_image) {
      auto it = pred_by_image.find(image);
      static const std::vector<EvalPrediction> none;
      pairings.push_back(match(it == pred_by_image.end() ? none : it->second,
                               gts, ec, h, w));
    }
    Fscore f = fscore(pairings);
    std::printf("%-14s %-9.4f %-9.4f %-9.4f\n", protocol, f.precision, f.recall,
                f.hmean);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grid-based text spotter: data generation, training, "
               "inference, and evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, resume_path, log_path;
  std::string ckpt_path, images_dir, viz_dir, pred_path, gt_path;
  int count = 0;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config JSON")->required();
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "config JSON")->required();
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", out_path, "checkpoint output path")->required();
  tr->add_option("--resume", resume_path, "checkpoint to resume from");
  tr->add_option("--log", log_path, "metrics log path (default <out>.log)");

  CLI::App* sp = app.add_subcommand("spot", "run inference on images");
  sp->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  sp->add_option("--images", images_dir, "image directory")->required();
  sp->add_option("--out", out_path, "results JSONL path")->required();
  sp->add_option("--viz", viz_dir, "directory for attention/centerline maps");

  CLI::App* ev = app.add_subcommand("eval", "score predictions");
  ev->add_option("--pred", pred_path, "predictions JSONL")->required();
  ev->add_option("--gt", gt_path, "ground-truth annotations JSONL")->required();
  ev->add_option("--config", config_path, "config JSON")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(config_path, count, out_path);
    if (tr->parsed())
      return run_train(config_path, data_dir, out_path, resume_path, log_path);
    if (sp->parsed()) return run_spot(ckpt_path, images_dir, out_path, viz_dir);
    if (ev->parsed()) return run_eval(pred_path, gt_path, config_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // CLI11 prints usage; nonzero on error
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

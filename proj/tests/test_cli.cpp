#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gridspot/checkpoint.hpp"

using namespace gridspot;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string binary() {
  const char* bin = std::getenv("GRIDSPOT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "GRIDSPOT_BIN must point at the executable");
  return bin;
}

struct RunOut {
  int exit_code;
  std::string output;  // stdout + stderr
};

RunOut run(const std::string& args, const fs::path& cwd) {
  fs::path log = cwd / "_cmd_output.txt";
  std::string cmd = "cd " + cwd.string() + " && " + binary() + " " + args +
                    " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string output((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, output};
}

fs::path workspace(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_config(const fs::path& path, int max_iters = 20,
                  const std::string& phase = "pretrain") {
  json j = {
      {"seed", 5},
      {"S", 2},
      {"L", 3},
      {"dictionary", "01"},
      {"backbone", {{"stage_channels", {4, 4, 8}}}},
      {"seg_hidden", 4},
      {"cma_hidden", 4},
      {"decoder_hidden", 4},
      {"datagen",
       {{"image_h", 32},
        {"image_w", 32},
        {"max_len", 3},
        {"alphabet", "01"},
        {"glyph_scale", 1},
        {"max_instances", 1}}},
      {"train",
       {{"phase", phase},
        {"max_iters", max_iters},
        {"eval_every", 10},
        {"decay_steps", {15}}}},
  };
  std::ofstream(path) << j.dump(2);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("gen writes the dataset and is idempotent") {
  fs::path ws = workspace("gridspot_cli_gen");
  write_config(ws / "cfg.json");

  RunOut r = run("gen --config cfg.json --count 10 --out data", ws);
  CHECK(r.exit_code == 0);
  int pgms = 0;
  for (const auto& e : fs::directory_iterator(ws / "data"))
    if (e.path().extension() == ".pgm") ++pgms;
  CHECK(pgms == 10);
  CHECK(count_lines(ws / "data/annotations.jsonl") == 10);

  std::string first = read_file(ws / "data/annotations.jsonl");
  RunOut r2 = run("gen --config cfg.json --count 10 --out data2", ws);
  CHECK(r2.exit_code == 0);
  CHECK(read_file(ws / "data2/annotations.jsonl") == first);

  SUBCASE("count 0 gives an empty annotation file") {
    RunOut r3 = run("gen --config cfg.json --count 0 --out data0", ws);
    CHECK(r3.exit_code == 0);
    CHECK(count_lines(ws / "data0/annotations.jsonl") == 0);
  }
  fs::remove_all(ws);
}

TEST_CASE("bad invocations exit with the usage/config code") {
  fs::path ws = workspace("gridspot_cli_bad");
  write_config(ws / "cfg.json");
  SUBCASE("missing required flag") {
    CHECK(run("gen --config cfg.json --count 1", ws).exit_code != 0);
  }
  SUBCASE("unknown config key") {
    std::ofstream(ws / "typo.json") << R"({"seed": 1, "gird": 4})";
    RunOut r = run("gen --config typo.json --count 1 --out d", ws);
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("unknown key") != std::string::npos);
  }
  SUBCASE("missing config file") {
    CHECK(run("gen --config nope.json --count 1 --out d", ws).exit_code == 2);
  }
  fs::remove_all(ws);
}

TEST_CASE("train writes a loadable checkpoint and a schedule-aware log") {
  fs::path ws = workspace("gridspot_cli_train");
  write_config(ws / "cfg.json");
  REQUIRE(run("gen --config cfg.json --count 6 --out data", ws).exit_code == 0);

  RunOut r = run("train --config cfg.json --data data --out ckpt.bin", ws);
  CHECK(r.exit_code == 0);

  Checkpoint ckpt = load_checkpoint((ws / "ckpt.bin").string());
  CHECK(ckpt.iter == 20);
  CHECK(!ckpt.params.empty());
  CHECK(ckpt.momentum.size() == ckpt.params.size());

  std::string log = read_file(ws / "ckpt.bin.log");
  CHECK(log.find("# iter=15 lr=") != std::string::npos);  // decay step
  CHECK(log.find("# iter=10 lr=") != std::string::npos);  // eval cadence
  fs::remove_all(ws);
}

TEST_CASE("pretrain without character boxes is a data error") {
  fs::path ws = workspace("gridspot_cli_nochar");
  write_config(ws / "cfg.json");
  REQUIRE(run("gen --config cfg.json --count 3 --out data", ws).exit_code == 0);

  // strip char_boxes from every annotation line
  std::ifstream in(ws / "data/annotations.jsonl");
  std::ostringstream rewritten;
  std::string line;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    for (json& inst : j["instances"]) inst.erase("char_boxes");
    rewritten << j.dump() << "\n";
  }
  in.close();
  std::ofstream(ws / "data/annotations.jsonl") << rewritten.str();

  RunOut r = run("train --config cfg.json --data data --out ckpt.bin", ws);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("character") != std::string::npos);

  // the finetune objective accepts the same data
  write_config(ws / "ft.json", 5, "finetune");
  CHECK(run("train --config ft.json --data data --out ft.bin", ws).exit_code == 0);
  fs::remove_all(ws);
}

TEST_CASE("resume reproduces the uninterrupted run exactly") {
  fs::path ws = workspace("gridspot_cli_resume");
  write_config(ws / "cfg.json", 20);
  write_config(ws / "half.json", 10);
  REQUIRE(run("gen --config cfg.json --count 4 --out data", ws).exit_code == 0);

  REQUIRE(run("train --config cfg.json --data data --out full.bin", ws)
              .exit_code == 0);
  REQUIRE(run("train --config half.json --data data --out half.bin", ws)
              .exit_code == 0);
  REQUIRE(run("train --config cfg.json --data data --out resumed.bin "
              "--resume half.bin",
              ws)
              .exit_code == 0);

  CHECK(read_file(ws / "half.bin.log") + read_file(ws / "resumed.bin.log") ==
        read_file(ws / "full.bin.log"));
  CHECK(read_file(ws / "resumed.bin") == read_file(ws / "full.bin"));
  fs::remove_all(ws);
}

TEST_CASE("spot emits one result line per image and optional overlays") {
  fs::path ws = workspace("gridspot_cli_spot");
  write_config(ws / "cfg.json", 10);
  REQUIRE(run("gen --config cfg.json --count 3 --out data", ws).exit_code == 0);
  REQUIRE(run("train --config cfg.json --data data --out ckpt.bin", ws)
              .exit_code == 0);

  RunOut r = run("spot --ckpt ckpt.bin --images data --out results.jsonl "
                 "--viz viz",
                 ws);
  CHECK(r.exit_code == 0);
  CHECK(count_lines(ws / "results.jsonl") == 3);

  // each image gets L=3 slot overlays plus a centerline mask
  int overlays = 0, centerlines = 0;
  for (const auto& e : fs::directory_iterator(ws / "viz")) {
    std::string name = e.path().filename().string();
    if (name.find("_slot") != std::string::npos) ++overlays;
    if (name.find("_centerline") != std::string::npos) ++centerlines;
  }
  CHECK(overlays == 3 * 3);
  CHECK(centerlines == 3);

  SUBCASE("a corrupted checkpoint refuses to run") {
    std::string bytes = read_file(ws / "ckpt.bin");
    bytes[bytes.size() - 10] ^= 0x40;
    std::ofstream(ws / "ckpt.bin", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    RunOut bad = run("spot --ckpt ckpt.bin --images data --out r.jsonl", ws);
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("checksum") != std::string::npos);
  }
  fs::remove_all(ws);
}

TEST_CASE("eval scores hand-built predictions") {
  fs::path ws = workspace("gridspot_cli_eval");
  write_config(ws / "cfg.json");

  std::ofstream(ws / "gt.jsonl")
      << R"({"image":"a.pgm","instances":[{"polygon":[[2,2],[18,2],[18,10],[2,10]],"transcript":"01"}]})"
      << "\n";

  SUBCASE("perfect predictions score 1 in both protocols") {
    std::ofstream(ws / "pred.jsonl")
        << R"({"image":"a.pgm","results":[{"bbox":[2,2,18,10],"transcript":"01","confidence":1.0,"best_grid":[0,0]}]})"
        << "\n";
    RunOut r = run("eval --pred pred.jsonl --gt gt.jsonl --config cfg.json", ws);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("end_to_end     1.0000    1.0000    1.0000") !=
          std::string::npos);
    CHECK(r.output.find("word_spotting  1.0000    1.0000    1.0000") !=
          std::string::npos);
  }
  SUBCASE("empty prediction file gives zero recall") {
    std::ofstream(ws / "pred.jsonl");
    RunOut r = run("eval --pred pred.jsonl --gt gt.jsonl --config cfg.json", ws);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("end_to_end     0.0000    0.0000    0.0000") !=
          std::string::npos);
  }
  SUBCASE("predictions for an unknown image without a file are an error") {
    std::ofstream(ws / "pred.jsonl")
        << R"({"image":"ghost.pgm","results":[]})" << "\n";
    RunOut r = run("eval --pred pred.jsonl --gt gt.jsonl --config cfg.json", ws);
    CHECK(r.exit_code == 2);
  }
  fs::remove_all(ws);
}

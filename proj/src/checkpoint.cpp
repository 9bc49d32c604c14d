#include "gridspot/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace gridspot {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'G', 'S', 'C', 'K', '0', '0', '0', '1'};

void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void append_doubles_le(std::string& out, const Eigen::ArrayXd& values) {
  for (long i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    double v = values[i];
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b)
      out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

json manifest_json(const std::vector<CheckpointEntry>& entries,
                   std::size_t& offset) {
  json m = json::array();
  for (const CheckpointEntry& e : entries) {
    if (e.values.size() != shape_size(e.shape))
      throw UsageError("checkpoint entry " + e.name + " has " +
                       std::to_string(e.values.size()) + " values for shape " +
                       shape_str(e.shape));
    m.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += static_cast<std::size_t>(e.values.size()) * 8;
  }
  return m;
}

std::vector<CheckpointEntry> read_manifest(const json& m, const std::string& path,
                                           const unsigned char* payload,
                                           std::size_t payload_len) {
  std::vector<CheckpointEntry> out;
  for (const json& jm : m) {
    CheckpointEntry e;
    e.name = jm.at("name").get<std::string>();
    e.shape = jm.at("shape").get<std::vector<int>>();
    std::size_t offset = jm.at("offset").get<std::size_t>();
    long n = shape_size(e.shape);
    if (offset + static_cast<std::size_t>(n) * 8 > payload_len)
      throw DataError(path + ": manifest entry " + e.name +
                      " points past the payload");
    e.values.resize(n);
    for (long i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= std::uint64_t(payload[offset + 8 * i + b]) << (8 * b);
      double v;
      std::memcpy(&v, &bits, 8);
      e.values[i] = v;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::size_t offset = 0;
  json header;
  header["config"] = config_to_json(ckpt.cfg);
  header["dictionary"] = ckpt.cfg.make_dictionary().symbols();
  header["iter"] = ckpt.iter;
  header["manifest"] = manifest_json(ckpt.params, offset);
  header["momentum_manifest"] = manifest_json(ckpt.momentum, offset);
  std::string header_text = header.dump();

  std::string payload;
  payload.reserve(offset);
  for (const CheckpointEntry& e : ckpt.params) append_doubles_le(payload, e.values);
  for (const CheckpointEntry& e : ckpt.momentum)
    append_doubles_le(payload, e.values);

  std::string out(kMagic, sizeof kMagic);
  put_le32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out += payload;
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
  put_le32(out, crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < sizeof kMagic + 8 ||
      std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw DataError(path + ": not a checkpoint file (bad magic)");
  std::uint32_t header_len = get_le32(p + sizeof kMagic);
  std::size_t header_start = sizeof kMagic + 4;
  if (header_start + header_len + 4 > buf.size())
    throw DataError(path + ": truncated checkpoint header");

  std::size_t payload_start = header_start + header_len;
  std::size_t payload_len = buf.size() - payload_start - 4;
  std::uint32_t stored_crc = get_le32(p + buf.size() - 4);
  std::uint32_t actual_crc = static_cast<std::uint32_t>(
      crc32(0, p + payload_start, static_cast<uInt>(payload_len)));
  if (stored_crc != actual_crc)
    throw DataError(path + ": checksum mismatch, refusing to load");

  json header;
  try {
    header = json::parse(buf.begin() + static_cast<long>(header_start),
                         buf.begin() + static_cast<long>(payload_start));
  } catch (const json::parse_error& e) {
    throw DataError(path + ": corrupt header: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.cfg = config_from_json(header.at("config"));
  ckpt.iter = header.at("iter").get<std::int64_t>();
  if (header.at("dictionary").get<std::string>() !=
      ckpt.cfg.make_dictionary().symbols())
    throw DataError(path + ": dictionary disagrees with the config snapshot");
  ckpt.params = read_manifest(header.at("manifest"), path, p + payload_start,
                              payload_len);
  ckpt.momentum = read_manifest(header.at("momentum_manifest"), path,
                                p + payload_start, payload_len);
  return ckpt;
}

Checkpoint snapshot(const SpotterModel& model, std::int64_t iter) {
  Checkpoint ckpt;
  ckpt.cfg = model.cfg;
  ckpt.iter = iter;
  for (const auto& [name, t] : model.params())
    ckpt.params.push_back({name, t.shape(), t.array()});
  return ckpt;
}

SpotterModel model_from_checkpoint(const Checkpoint& ckpt) {
  SpotterModel model = SpotterModel::init(ckpt.cfg);
  ParamMap params = model.params();
  if (params.size() != ckpt.params.size())
    throw DataError("checkpoint manifest has " +
                    std::to_string(ckpt.params.size()) + " entries, model has " +
                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CheckpointEntry& e = ckpt.params[i];
    Tensor t = params[i].second;
    if (params[i].first != e.name)
      throw DataError("checkpoint entry " + e.name + " where the model expects " +
                      params[i].first);
    if (t.shape() != e.shape)
      throw DataError("checkpoint entry " + e.name + " has shape " +
                      shape_str(e.shape) + ", model expects " +
                      shape_str(t.shape()));
    t.array() = e.values;
  }
  return model;
}

}  // namespace gridspot

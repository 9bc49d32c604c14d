#include "gridspot/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace gridspot {

namespace {

std::uint8_t quantize(double v) {
  double c = std::min(1.0, std::max(0.0, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::vector<std::uint8_t> to_bytes(const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.pixels.size());
  for (long i = 0; i < img.pixels.size(); ++i) bytes[i] = quantize(img.pixels[i]);
  return bytes;
}

GrayImage from_bytes(int h, int w, const std::uint8_t* bytes) {
  GrayImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(static_cast<long>(h) * w);
  for (long i = 0; i < img.pixels.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void png_chunk(std::vector<std::uint8_t>& out, const char* type,
               const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_be32(out, crc);
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError(path + ": not a binary PGM (P5) file");
  int w = 0, h = 0, maxval = 0;
  // header tokens may be separated by comments
  auto next_int = [&](int& v) {
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (!(in >> v)) throw DataError(path + ": truncated PGM header");
      return;
    }
  };
  next_int(w);
  next_int(h);
  next_int(maxval);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw DataError(path + ": unsupported PGM dimensions or depth");
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> bytes(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError(path + ": truncated PGM payload");
  return from_bytes(h, w, bytes.data());
}

void write_png(const std::string& path, const GrayImage& img) {
  auto bytes = to_bytes(img);
  // raw scanlines with filter byte 0
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (img.width + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), bytes.begin() + static_cast<long>(y) * img.width,
               bytes.begin() + static_cast<long>(y + 1) * img.width);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png compression failed for " + path);
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", comp);
  png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path);
}

GrayImage read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw DataError(path + ": not a PNG file");

  int w = 0, h = 0;
  std::vector<std::uint8_t> idat;
  size_t pos = 8;
  while (pos + 12 <= buf.size()) {
    std::uint32_t len = be32(&buf[pos]);
    std::string type(reinterpret_cast<const char*>(&buf[pos + 4]), 4);
    if (pos + 12 + len > buf.size()) throw DataError(path + ": truncated chunk");
    const std::uint8_t* payload = &buf[pos + 8];
    if (type == "IHDR") {
      if (len != 13) throw DataError(path + ": bad IHDR");
      w = static_cast<int>(be32(payload));
      h = static_cast<int>(be32(payload + 4));
      int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8 || color != 0 || interlace != 0)
        throw DataError(path + ": only 8-bit non-interlaced grayscale PNG supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || idat.empty()) throw DataError(path + ": missing image data");

  std::vector<std::uint8_t> raw(static_cast<size_t>(h) * (w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw DataError(path + ": corrupt PNG stream");

  // undo per-row filtering (bpp = 1)
  std::vector<std::uint8_t> bytes(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    std::uint8_t filter = raw[static_cast<size_t>(y) * (w + 1)];
    const std::uint8_t* src = &raw[static_cast<size_t>(y) * (w + 1) + 1];
    std::uint8_t* dst = &bytes[static_cast<size_t>(y) * w];
    const std::uint8_t* up = y > 0 ? &bytes[static_cast<size_t>(y - 1) * w] : nullptr;
    for (int x = 0; x < w; ++x) {
      int a = x > 0 ? dst[x - 1] : 0;
      int b = up ? up[x] : 0;
      int c = (x > 0 && up) ? up[x - 1] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default:
          throw DataError(path + ": unknown PNG filter");
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return from_bytes(h, w, bytes.data());
}

GrayImage read_image(const std::string& path) {
  auto ends_with = [&](const char* suffix) {
    std::string s(suffix);
    return path.size() >= s.size() &&
           path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".pgm")) return read_pgm(path);
  if (ends_with(".png")) return read_png(path);
  throw DataError(path + ": unsupported image format (want .pgm or .png)");
}

}  // namespace gridspot

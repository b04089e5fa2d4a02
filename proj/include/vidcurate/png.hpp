#pragma once

// 8-bit RGB PNG encode/decode, enough to ship frames to remote providers.
// The decoder accepts only what the encoder produces (RGB8, non-interlaced,
// filter type 0 on every row).

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <zlib.h>

#include "vidcurate/error.hpp"
#include "vidcurate/image.hpp"

namespace vidcurate {

namespace png_detail {

inline constexpr std::array<unsigned char, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

inline std::uint32_t get_be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (p[1] << 16) | (p[2] << 8) | p[3];
}

inline void chunk(std::string& out, const char type[4], const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace png_detail

inline std::string encode_png(const RgbImage& img) {
  using namespace png_detail;
  std::string out(reinterpret_cast<const char*>(kSignature.data()), kSignature.size());
  std::string ihdr;
  put_be32(ihdr, img.width());
  put_be32(ihdr, img.height());
  ihdr += std::string{8, 2, 0, 0, 0};  // depth 8, RGB, deflate, filter 0, no interlace
  chunk(out, "IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
  std::vector<unsigned char> raw;
  raw.reserve((stride + 1) * img.height());
  for (std::uint32_t y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    const auto* row = &img.buffer()[y * stride];
    raw.insert(raw.end(), row, row + stride);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("PNG deflate failed");
  z.resize(zlen);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

inline RgbImage decode_png(const std::string& bytes) {
  using namespace png_detail;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(p, kSignature.data(), 8) != 0) throw FormatError("not a PNG");
  std::size_t pos = 8;
  std::uint32_t w = 0, h = 0;
  std::string idat;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = get_be32(p + pos);
    const std::string type(bytes.data() + pos + 4, 4);
    if (pos + 12 + len > bytes.size()) throw FormatError("truncated PNG chunk");
    const unsigned char* data = p + pos + 8;
    if (type == "IHDR") {
      if (len != 13 || data[8] != 8 || data[9] != 2 || data[12] != 0) throw FormatError("unsupported PNG layout");
      w = get_be32(data);
      h = get_be32(data + 4);
    } else if (type == "IDAT") {
      idat.append(reinterpret_cast<const char*>(data), len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w == 0 || h == 0) throw FormatError("PNG lacks IHDR");
  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  std::vector<unsigned char> raw((stride + 1) * h);
  uLongf rlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rlen, reinterpret_cast<const Bytef*>(idat.data()), static_cast<uLong>(idat.size())) !=
          Z_OK ||
      rlen != raw.size())
    throw FormatError("PNG inflate failed");
  RgbImage img(w, h);
  for (std::uint32_t y = 0; y < h; ++y) {
    if (raw[y * (stride + 1)] != 0) throw FormatError("unsupported PNG row filter");
    std::memcpy(&img.buffer()[y * stride], &raw[y * (stride + 1) + 1], stride);
  }
  return img;
}

}  // namespace vidcurate

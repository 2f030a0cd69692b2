#include "svs/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace svs {

namespace {

uint32_t crc32(const unsigned char* data, size_t n, uint32_t crc = 0xffffffffu) {
  static std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

uint32_t adler32(const std::vector<unsigned char>& data) {
  uint32_t a = 1, b = 0;
  for (unsigned char byte : data) {
    a = (a + byte) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void push_u32be(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void push_chunk(std::vector<unsigned char>& out, const char type[5],
                const std::vector<unsigned char>& body) {
  push_u32be(out, static_cast<uint32_t>(body.size()));
  std::vector<unsigned char> typed(type, type + 4);
  typed.insert(typed.end(), body.begin(), body.end());
  out.insert(out.end(), typed.begin(), typed.end());
  push_u32be(out, crc32(typed.data(), typed.size()) ^ 0xffffffffu);
}

// zlib stream from stored (uncompressed) deflate blocks
std::vector<unsigned char> zlib_stored(const std::vector<unsigned char>& raw) {
  std::vector<unsigned char> out = {0x78, 0x01};
  size_t pos = 0;
  do {
    const size_t len = std::min<size_t>(65535, raw.size() - pos);
    const bool final_block = pos + len == raw.size();
    out.push_back(final_block ? 0x01 : 0x00);
    out.push_back(static_cast<unsigned char>(len & 0xff));
    out.push_back(static_cast<unsigned char>(len >> 8));
    out.push_back(static_cast<unsigned char>(~len & 0xff));
    out.push_back(static_cast<unsigned char>((~len >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + static_cast<long>(pos),
               raw.begin() + static_cast<long>(pos + len));
    pos += len;
  } while (pos < raw.size());
  push_u32be(out, adler32(raw));
  return out;
}

struct Rgb {
  unsigned char r, g, b;
};

// dark blue -> magenta -> orange -> near-white
Rgb heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double r, g, b;
  if (v < 0.33) {
    const double t = v / 0.33;
    r = lerp(15, 120, t), g = lerp(10, 30, t), b = lerp(60, 140, t);
  } else if (v < 0.66) {
    const double t = (v - 0.33) / 0.33;
    r = lerp(120, 240, t), g = lerp(30, 120, t), b = lerp(140, 40, t);
  } else {
    const double t = (v - 0.66) / 0.34;
    r = lerp(240, 255, t), g = lerp(120, 235, t), b = lerp(40, 190, t);
  }
  return Rgb{static_cast<unsigned char>(r), static_cast<unsigned char>(g),
             static_cast<unsigned char>(b)};
}

void put_pixel(std::vector<unsigned char>& rgb, Index width, Index x, Index y, Rgb c) {
  const size_t i = 3 * static_cast<size_t>(y * width + x);
  rgb[i] = c.r;
  rgb[i + 1] = c.g;
  rgb[i + 2] = c.b;
}

void render_mel_into(std::vector<unsigned char>& rgb, Index width, Index y_off, const Matf& mel,
                     int ppf) {
  const Index bins = mel.cols();
  for (Index t = 0; t < mel.rows(); ++t)
    for (Index b = 0; b < bins; ++b) {
      const Rgb c = heat(mel(t, b));
      for (int p = 0; p < ppf; ++p)
        put_pixel(rgb, width, t * ppf + p, y_off + (bins - 1 - b), c);
    }
}

}  // namespace

void write_png(const std::string& path, const std::vector<unsigned char>& rgb, Index width,
               Index height) {
  require(static_cast<Index>(rgb.size()) == 3 * width * height, Err::BadConfig,
          "write_png: buffer size does not match dimensions");
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(height * (1 + 3 * width)));
  for (Index y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const size_t row = 3 * static_cast<size_t>(y * width);
    raw.insert(raw.end(), rgb.begin() + static_cast<long>(row),
               rgb.begin() + static_cast<long>(row + 3 * static_cast<size_t>(width)));
  }

  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<unsigned char> ihdr;
  push_u32be(ihdr, static_cast<uint32_t>(width));
  push_u32be(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  push_chunk(png, "IHDR", ihdr);
  push_chunk(png, "IDAT", zlib_stored(raw));
  push_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Err::UnreadableFile, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

void save_mel_image(const std::string& path, const Matf& mel, int pixels_per_frame) {
  const Index width = mel.rows() * pixels_per_frame;
  const Index height = mel.cols();
  std::vector<unsigned char> rgb(3 * static_cast<size_t>(width * height), 0);
  render_mel_into(rgb, width, 0, mel, pixels_per_frame);
  write_png(path, rgb, width, height);
}

void save_mel_pair_image(const std::string& path, const Matf& reference, const Matf& synthesized,
                         int pixels_per_frame) {
  const Index frames = std::max(reference.rows(), synthesized.rows());
  const Index width = frames * pixels_per_frame;
  const Index gap = 4;
  const Index height = reference.cols() + gap + synthesized.cols();
  std::vector<unsigned char> rgb(3 * static_cast<size_t>(width * height), 30);
  render_mel_into(rgb, width, 0, reference, pixels_per_frame);
  render_mel_into(rgb, width, reference.cols() + gap, synthesized, pixels_per_frame);
  write_png(path, rgb, width, height);
}

void save_alignment_image(const std::string& path, const Matf& probs,
                          const std::vector<AlignSegment>& segments, int pixels_per_frame,
                          int band_height) {
  const Index T = probs.rows(), V = probs.cols();
  const Index width = T * pixels_per_frame;
  const Index height = V * band_height;
  std::vector<unsigned char> rgb(3 * static_cast<size_t>(width * height), 0);
  for (Index t = 0; t < T; ++t)
    for (Index v = 0; v < V; ++v) {
      const Rgb c = heat(probs(t, v));
      for (int px = 0; px < pixels_per_frame; ++px)
        for (int py = 0; py < band_height - 1; ++py)  // 1-px separator per band
          put_pixel(rgb, width, t * pixels_per_frame + px, v * band_height + py, c);
    }
  const Rgb overlay{255, 64, 64};
  for (const AlignSegment& seg : segments) {
    const Index y0 = seg.symbol * band_height;
    const Index y1 = y0 + band_height - 2;
    for (Index x = seg.begin * pixels_per_frame; x < (seg.end + 1) * pixels_per_frame; ++x) {
      put_pixel(rgb, width, x, y0, overlay);
      put_pixel(rgb, width, x, y1, overlay);
    }
    for (Index y = y0; y <= y1; ++y) {
      put_pixel(rgb, width, seg.begin * pixels_per_frame, y, overlay);
      put_pixel(rgb, width, (seg.end + 1) * pixels_per_frame - 1, y, overlay);
    }
  }
  write_png(path, rgb, width, height);
}

}  // namespace svs

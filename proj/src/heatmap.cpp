#include "spdesmc/heatmap.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace spdesmc {

namespace {

constexpr std::array<std::array<int, 3>, 5> kAnchors{{
    {59, 76, 192}, {124, 159, 249}, {247, 247, 247}, {238, 110, 84}, {180, 4, 38}}};

std::uint32_t crc32_table_entry(std::uint32_t n) {
  for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
  return n;
}

std::uint32_t crc32(const std::uint8_t* data, size_t len, std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) t[n] = crc32_table_entry(n);
    return t;
  }();
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& payload) {
  push_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  push_u32(out, crc32(body.data(), body.size()) ^ 0xffffffffu);
}

// zlib stream with stored deflate blocks; fully deterministic
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> out;
  out.push_back(0x78);
  out.push_back(0x01);
  size_t pos = 0;
  do {
    const size_t len = std::min<size_t>(raw.size() - pos, 65535);
    const bool final = pos + len == raw.size();
    out.push_back(final ? 1 : 0);
    out.push_back(len & 0xff);
    out.push_back((len >> 8) & 0xff);
    out.push_back(~len & 0xff);
    out.push_back((~len >> 8) & 0xff);
    out.insert(out.end(), raw.begin() + pos, raw.begin() + pos + len);
    pos += len;
  } while (pos < raw.size());
  std::uint32_t s1 = 1, s2 = 0;
  for (std::uint8_t b : raw) {
    s1 = (s1 + b) % 65521;
    s2 = (s2 + s1) % 65521;
  }
  push_u32(out, (s2 << 16) | s1);
  return out;
}

}  // namespace

std::array<std::uint8_t, 3> colormap(double t) {
  t = std::min(1.0, std::max(0.0, t));
  const double pos = t * 4.0;
  const int seg = std::min(3, static_cast<int>(pos));
  const double frac = pos - seg;
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double v = kAnchors[seg][c] + frac * (kAnchors[seg + 1][c] - kAnchors[seg][c]);
    rgb[c] = static_cast<std::uint8_t>(std::lround(v));
  }
  return rgb;
}

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& rgb) {
  if (static_cast<size_t>(width) * height * 3 != rgb.size())
    throw std::invalid_argument("write_png_rgb8: pixel buffer size mismatch");
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + static_cast<size_t>(r) * 3 * width,
               rgb.begin() + static_cast<size_t>(r + 1) * 3 * width);
  }

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  push_u32(ihdr, width);
  push_u32(ihdr, height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);  // no interlace
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", zlib_stored(raw));
  push_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), out.size());
}

void render_heatmap(const Eigen::MatrixXd& values, const std::string& path, int upscale) {
  if (upscale < 1) throw std::invalid_argument("upscale must be >= 1");
  const int rows = static_cast<int>(values.rows());
  const int cols = static_cast<int>(values.cols());
  if (rows == 0 || cols == 0) throw std::invalid_argument("empty heatmap matrix");
  double vmax = values.array().abs().maxCoeff();
  if (vmax == 0.0) vmax = 1.0;

  const int W = cols * upscale, H = rows * upscale;
  std::vector<std::uint8_t> rgb(static_cast<size_t>(W) * H * 3);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto color = colormap(0.5 + values(r, c) / (2.0 * vmax));
      for (int dr = 0; dr < upscale; ++dr)
        for (int dc = 0; dc < upscale; ++dc) {
          const size_t px = (static_cast<size_t>(r * upscale + dr) * W + c * upscale + dc) * 3;
          rgb[px] = color[0];
          rgb[px + 1] = color[1];
          rgb[px + 2] = color[2];
        }
    }
  }
  write_png_rgb8(path, W, H, rgb);
}

}  // namespace spdesmc

#include "usspine/image.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace usspine {

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("GrayImage: dimensions must be positive");
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (next_token(in) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (maxval != 255) throw std::runtime_error(path.string() + ": only maxval 255 is supported");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  return img;
}

const std::array<double, 256>& log_intensity_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    const double denom = std::log(256.0);
    for (int i = 0; i < 256; ++i) t[static_cast<std::size_t>(i)] = 255.0 * std::log1p(static_cast<double>(i)) / denom;
    return t;
  }();
  return table;
}

Point2 FrameWarp::forward(Point2 p, int width, int height) const {
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double a = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double dx = p.x - cx, dy = p.y - cy;
  Point2 q{cx + c * dx - s * dy, cy + s * dx + c * dy};
  if (flip) q.x = (width - 1) - q.x;
  return q;
}

Point2 FrameWarp::inverse(Point2 p, int width, int height) const {
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  if (flip) p.x = (width - 1) - p.x;
  const double a = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double dx = p.x - cx, dy = p.y - cy;
  return Point2{cx + c * dx + s * dy, cy - s * dx + c * dy};
}

std::vector<double> network_input(const GrayImage& frame, int out_size, const FrameWarp& warp) {
  const auto& lut = log_intensity_table();
  const double sx = static_cast<double>(frame.width) / out_size;
  const double sy = static_cast<double>(frame.height) / out_size;
  const bool identity = warp.rotation_deg == 0.0 && !warp.flip;
  std::vector<double> out(static_cast<std::size_t>(out_size) * out_size, 0.0);
  auto sample = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return 0.0;
    return lut[frame.at(x, y)];
  };
  for (int v = 0; v < out_size; ++v) {
    for (int u = 0; u < out_size; ++u) {
      Point2 src{u * sx, v * sy};
      if (!identity) src = warp.inverse(src, frame.width, frame.height);
      const double fx = std::floor(src.x), fy = std::floor(src.y);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double ax = src.x - fx, ay = src.y - fy;
      const double top = (1.0 - ax) * sample(x0, y0) + ax * sample(x0 + 1, y0);
      const double bottom = (1.0 - ax) * sample(x0, y0 + 1) + ax * sample(x0 + 1, y0 + 1);
      out[static_cast<std::size_t>(v) * out_size + u] = ((1.0 - ay) * top + ay * bottom) / 255.0;
    }
  }
  return out;
}

}  // namespace usspine

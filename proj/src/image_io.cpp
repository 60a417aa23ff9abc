#include "netscope/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "netscope/errors.hpp"

namespace netscope {

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PPM '" + path + "'");
  if (ppm_token(in) != "P6") throw DataError("'" + path + "': not a binary PPM (P6)");
  int w, h, maxval;
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::exception&) {
    throw DataError("'" + path + "': malformed PPM header");
  }
  if (w < 1 || h < 1) throw DataError("'" + path + "': malformed PPM dimensions");
  if (maxval != 255)
    throw DataError("'" + path + "': unsupported maxval " + std::to_string(maxval) +
                    " (only 255)");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw DataError("'" + path + "': PPM pixel data truncated");

  Tensor img(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) =
            static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("write_ppm expects (1,3,H,W), got " + image.dims_str());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write PPM '" + path + "'");
  out << "P6\n" << image.w() << " " << image.h() << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.w()) * image.h() * 3);
  for (int y = 0; y < image.h(); ++y)
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < 3; ++c) {
        float v = image.at(0, c, y, x);
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        raw[(static_cast<std::size_t>(y) * image.w() + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("write failure on PPM '" + path + "'");
}

Tensor upscale_nearest(const Tensor& image, int factor) {
  if (factor < 1) throw Error("upscale factor must be >= 1");
  if (factor == 1) return image;
  Tensor out(image.n(), image.c(), image.h() * factor, image.w() * factor);
  for (int n = 0; n < image.n(); ++n)
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x)
          out.at(n, c, y, x) = image.at(n, c, y / factor, x / factor);
  return out;
}

Tensor minmax_normalize(const Tensor& image) {
  if (image.empty()) return image;
  float lo = image[0], hi = image[0];
  for (std::size_t i = 0; i < image.size(); ++i) {
    lo = std::min(lo, image[i]);
    hi = std::max(hi, image[i]);
  }
  Tensor out(image.n(), image.c(), image.h(), image.w());
  if (hi <= lo) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5f;
    return out;
  }
  const float scale = 1.0f / (hi - lo);
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - lo) * scale;
  return out;
}

}  // namespace netscope

#include "netscope/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "netscope/errors.hpp"
#include "netscope/image_io.hpp"

namespace netscope::data {

std::string Dataset::content_key() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x1e;
    h *= 0x100000001b3ULL;
  };
  for (const Item& it : items) eat(it.id);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const Dataset::Item& Dataset::by_id(const std::string& id) const {
  for (const Item& it : items)
    if (it.id == id) return it;
  throw DataError("no image with id '" + id + "' in dataset");
}

namespace {

constexpr int kCifarRecord = 1 + 3 * 32 * 32;
constexpr int kCifarPerFile = 10000;

void load_cifar_file(const std::string& path, const std::string& id_prefix, int id_base,
                     Dataset& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing CIFAR-10 file '" + path + "'");
  std::vector<unsigned char> rec(kCifarRecord);
  for (int r = 0; r < kCifarPerFile; ++r) {
    in.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
    if (in.gcount() != kCifarRecord)
      throw DataError("short read in '" + path + "' at record " + std::to_string(r));
    Dataset::Item item;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%s%05d", id_prefix.c_str(), id_base + r);
    item.id = buf;
    item.label = rec[0];
    if (item.label > 9) throw DataError("label out of range in '" + path + "'");
    item.image = Tensor(1, 3, 32, 32);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 32 * 32; ++i)
        item.image[static_cast<std::size_t>(c) * 1024 + i] =
            static_cast<float>(rec[1 + c * 1024 + i]) / 255.0f;
    out.items.push_back(std::move(item));
  }
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  Dataset train, val;
  train.split = "train";
  val.split = "val";
  train.num_classes = val.num_classes = 10;
  for (int b = 1; b <= 5; ++b)
    load_cifar_file(dir + "/data_batch_" + std::to_string(b) + ".bin", "train",
                    (b - 1) * kCifarPerFile, train);
  load_cifar_file(dir + "/test_batch.bin", "val", 0, val);
  return {std::move(train), std::move(val)};
}

Dataset load_ppm_dir(const std::string& dir, const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw DataError("cannot open manifest '" + manifest_path + "'");
  Dataset out;
  out.split = "manifest";
  std::string line;
  int max_label = -1;
  int line_no = 0;
  while (std::getline(mf, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, rel, label_text;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, rel, '\t') ||
        !std::getline(ss, label_text, '\t')) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      " is not id<TAB>path<TAB>label");
    }
    Dataset::Item item;
    item.id = id;
    try {
      item.label = std::stoi(label_text);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(line_no) + ": bad label '" +
                      label_text + "'");
    }
    if (item.label < 0) throw DataError("negative label in manifest line " + std::to_string(line_no));
    item.image = read_ppm(dir + "/" + rel);
    max_label = std::max(max_label, item.label);
    out.items.push_back(std::move(item));
  }
  for (std::size_t i = 0; i < out.items.size(); ++i)
    for (std::size_t j = i + 1; j < out.items.size(); ++j)
      if (out.items[i].id == out.items[j].id)
        throw DataError("duplicate image id '" + out.items[i].id + "' in manifest");
  out.num_classes = max_label + 1;
  return out;
}

WhitenStats compute_whiten(const Dataset& train) {
  if (train.items.empty()) throw DataError("cannot whiten an empty train split");
  const int channels = train.items[0].image.c();
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  std::vector<std::uint64_t> count(channels, 0);
  for (const auto& item : train.items) {
    const Tensor& img = item.image;
    if (img.c() != channels) throw DataError("mixed channel counts in train split");
    const std::size_t hw = static_cast<std::size_t>(img.h()) * img.w();
    for (int c = 0; c < channels; ++c) {
      const float* plane = img.data() + img.plane(0, c);
      for (std::size_t i = 0; i < hw; ++i) sum[c] += plane[i];
      count[c] += hw;
    }
  }
  std::vector<double> mean(channels);
  for (int c = 0; c < channels; ++c) mean[c] = sum[c] / static_cast<double>(count[c]);
  for (const auto& item : train.items) {
    const Tensor& img = item.image;
    const std::size_t hw = static_cast<std::size_t>(img.h()) * img.w();
    for (int c = 0; c < channels; ++c) {
      const float* plane = img.data() + img.plane(0, c);
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = plane[i] - mean[c];
        sum_sq[c] += d * d;
      }
    }
  }
  WhitenStats stats;
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  for (int c = 0; c < channels; ++c) {
    const double var = sum_sq[c] / static_cast<double>(count[c]);
    if (var <= 0.0)
      throw DataError("channel " + std::to_string(c) + " has zero variance; cannot whiten");
    stats.mean[c] = static_cast<float>(mean[c]);
    stats.stddev[c] = static_cast<float>(std::sqrt(var));
  }
  return stats;
}

Tensor apply_whiten(const Tensor& x, const WhitenStats& stats) {
  if (x.c() != static_cast<int>(stats.mean.size()))
    throw ShapeError("whiten stats cover " + std::to_string(stats.mean.size()) +
                     " channels, image has " + std::to_string(x.c()));
  Tensor out(x.n(), x.c(), x.h(), x.w());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float m = stats.mean[c], inv = 1.0f / stats.stddev[c];
      const float* in = x.data() + x.plane(n, c);
      float* o = out.data() + out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) o[i] = (in[i] - m) * inv;
    }
  return out;
}

Tensor invert_whiten(const Tensor& x, const WhitenStats& stats) {
  if (x.c() != static_cast<int>(stats.mean.size()))
    throw ShapeError("whiten stats channel mismatch");
  Tensor out(x.n(), x.c(), x.h(), x.w());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float m = stats.mean[c], s = stats.stddev[c];
      const float* in = x.data() + x.plane(n, c);
      float* o = out.data() + out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) o[i] = in[i] * s + m;
    }
  return out;
}

CropRect sample_crop(const Tensor& x, Rng& rng) {
  const int h = x.h(), w = x.w();
  const double area = static_cast<double>(h) * w;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target_area = area * rng.uniform(0.08, 1.0);
    const double log_ratio = rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
    const double aspect = std::exp(log_ratio);
    const int cw = static_cast<int>(std::lround(std::sqrt(target_area * aspect)));
    const int ch = static_cast<int>(std::lround(std::sqrt(target_area / aspect)));
    if (cw < 1 || ch < 1 || cw > w || ch > h) continue;
    CropRect r;
    r.height = ch;
    r.width = cw;
    r.top = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(h - ch + 1)));
    r.left = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w - cw + 1)));
    return r;
  }
  const int side = std::min(h, w);
  return {(h - side) / 2, (w - side) / 2, side, side};
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
  if (out_h == x.h() && out_w == x.w()) return x;
  Tensor out(x.n(), x.c(), out_h, out_w);
  const float sy = static_cast<float>(x.h()) / static_cast<float>(out_h);
  const float sx = static_cast<float>(x.w()) / static_cast<float>(out_w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const float* in = x.data() + x.plane(n, c);
      float* o = out.data() + out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        if (fy < 0.0f) fy = 0.0f;
        int y0 = static_cast<int>(fy);
        if (y0 > x.h() - 1) y0 = x.h() - 1;
        const int y1 = std::min(y0 + 1, x.h() - 1);
        const float ty = fy - static_cast<float>(y0);
        for (int xx = 0; xx < out_w; ++xx) {
          float fx = (static_cast<float>(xx) + 0.5f) * sx - 0.5f;
          if (fx < 0.0f) fx = 0.0f;
          int x0 = static_cast<int>(fx);
          if (x0 > x.w() - 1) x0 = x.w() - 1;
          const int x1 = std::min(x0 + 1, x.w() - 1);
          const float tx = fx - static_cast<float>(x0);
          const float a = in[static_cast<std::size_t>(y0) * x.w() + x0];
          const float b = in[static_cast<std::size_t>(y0) * x.w() + x1];
          const float c2 = in[static_cast<std::size_t>(y1) * x.w() + x0];
          const float d = in[static_cast<std::size_t>(y1) * x.w() + x1];
          const float top = a + (b - a) * tx;
          const float bot = c2 + (d - c2) * tx;
          o[static_cast<std::size_t>(y) * out_w + xx] = top + (bot - top) * ty;
        }
      }
    }
  return out;
}

Tensor crop_resize(const Tensor& x, const CropRect& rect, int out_h, int out_w) {
  if (rect.top < 0 || rect.left < 0 || rect.height < 1 || rect.width < 1 ||
      rect.top + rect.height > x.h() || rect.left + rect.width > x.w())
    throw ShapeError("crop rectangle outside image");
  Tensor cropped(x.n(), x.c(), rect.height, rect.width);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < rect.height; ++y)
        for (int xx = 0; xx < rect.width; ++xx)
          cropped.at(n, c, y, xx) = x.at(n, c, rect.top + y, rect.left + xx);
  return resize_bilinear(cropped, out_h, out_w);
}

Tensor random_resized_crop(const Tensor& x, int out_h, int out_w, Rng& rng) {
  return crop_resize(x, sample_crop(x, rng), out_h, out_w);
}

Tensor flip_horizontal(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h(), x.w());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx)
          out.at(n, c, y, xx) = x.at(n, c, y, x.w() - 1 - xx);
  return out;
}

Tensor horizontal_flip(const Tensor& x, Rng& rng, double prob) {
  if (rng.next_double() < prob) return flip_horizontal(x);
  return x;
}

Tensor eval_transform(const Tensor& x, int out_h, int out_w) {
  if (x.h() == out_h && x.w() == out_w) return x;
  // Shorter side to out * 256/224, then center crop.
  const int short_target = static_cast<int>(std::lround(std::min(out_h, out_w) * 256.0 / 224.0));
  int rh, rw;
  if (x.h() <= x.w()) {
    rh = short_target;
    rw = std::max(out_w, static_cast<int>(std::lround(static_cast<double>(x.w()) * short_target / x.h())));
  } else {
    rw = short_target;
    rh = std::max(out_h, static_cast<int>(std::lround(static_cast<double>(x.h()) * short_target / x.w())));
  }
  Tensor resized = resize_bilinear(x, rh, rw);
  CropRect rect{(rh - out_h) / 2, (rw - out_w) / 2, out_h, out_w};
  Tensor out(resized.n(), resized.c(), out_h, out_w);
  for (int n = 0; n < resized.n(); ++n)
    for (int c = 0; c < resized.c(); ++c)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx)
          out.at(n, c, y, xx) = resized.at(n, c, rect.top + y, rect.left + xx);
  return out;
}

}  // namespace netscope::data

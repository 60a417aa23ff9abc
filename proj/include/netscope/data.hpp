#pragma once

#include <string>
#include <utility>
#include <vector>

#include "netscope/rng.hpp"
#include "netscope/tensor.hpp"

namespace netscope::data {

// In-memory dataset. Images are (1,C,H,W) in [0,1]; ids are unique and
// lexicographically ordered the way the loader produced them.
struct Dataset {
  struct Item {
    std::string id;
    Tensor image;
    int label = 0;
  };
  std::vector<Item> items;
  std::string split;
  int num_classes = 0;

  std::size_t size() const { return items.size(); }
  // FNV-1a over the ids; identifies the dataset in probe reports.
  std::string content_key() const;
  const Item& by_id(const std::string& id) const;
};

// Standard 6-file binary layout: data_batch_1..5.bin + test_batch.bin, 10000
// records each of 1 label byte + 3072 pixel bytes (planes R,G,B).
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

// Manifest TSV lines: id<TAB>relative_path<TAB>label. Files are P6 PPM.
Dataset load_ppm_dir(const std::string& dir, const std::string& manifest_path);

struct WhitenStats {
  std::vector<float> mean, stddev;  // per channel, computed on the train split
};

WhitenStats compute_whiten(const Dataset& train);
Tensor apply_whiten(const Tensor& x, const WhitenStats& stats);
Tensor invert_whiten(const Tensor& x, const WhitenStats& stats);

// Crop rectangle in source pixels (inclusive-exclusive).
struct CropRect {
  int top = 0, left = 0, height = 0, width = 0;
};

// Area fraction U(0.08, 1.0), aspect ratio log-uniform in [3/4, 4/3],
// uniform placement; falls back to a centered square after 10 oversize
// draws.
CropRect sample_crop(const Tensor& x, Rng& rng);

// Bilinear resize with half-pixel centers, border-clamped.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

Tensor crop_resize(const Tensor& x, const CropRect& rect, int out_h, int out_w);

Tensor random_resized_crop(const Tensor& x, int out_h, int out_w, Rng& rng);

Tensor flip_horizontal(const Tensor& x);
Tensor horizontal_flip(const Tensor& x, Rng& rng, double prob = 0.5);

// Deterministic evaluation transform: identity when dims already match,
// otherwise resize the shorter side to round(out * 256/224) and center-crop.
Tensor eval_transform(const Tensor& x, int out_h, int out_w);

}  // namespace netscope::data

#pragma once

#include <map>
#include <string>

#include "netscope/graph.hpp"
#include "netscope/tensor.hpp"

namespace netscope::rf {

// Per-layer receptive-field geometry: size r, jump j (input-pixel stride
// between adjacent neurons) and the input coordinate of neuron (0,0)'s RF
// center. Centers can sit on half pixels, so they are kept in half-pixel
// units (center_px = center_half / 2).
struct RFGeometry {
  int size = 1;
  int jump = 1;
  int center_half = 0;
  // Set when an add node joined branches whose sizes differ; the max was
  // taken (the effective RF covers all contributing pixels).
  bool merged_unequal = false;

  bool operator==(const RFGeometry&) const = default;
};

inline RFGeometry identity_geometry() { return {}; }

// Geometry after a k x k window with stride s and padding p:
//   r' = r + (k-1)*j,  j' = j*s,  c0' = c0 + ((k-1)/2 - p)*j.
RFGeometry compose(const RFGeometry& g, int kernel, int stride, int pad);

// Join at an add node: jumps and centers must agree (they do in the block
// grammar); size takes the max and flags a mismatch.
RFGeometry merge_add(const RFGeometry& a, const RFGeometry& b);

// Geometry at a layer's output. Elementwise layers (relu, bn) pass geometry
// through; add merges. Undefined for global avgpool and linear.
template <typename T>
RFGeometry geometry_of(const ModelGraphT<T>& model, const std::string& layer);

// Geometry for every layer where it is defined, in layer order.
template <typename T>
std::map<std::string, RFGeometry> geometry_table(const ModelGraphT<T>& model);

// Concrete input rectangle of one neuron. Bounds are inclusive pixel
// coordinates; the unclipped side always equals the layer's RF size r
// (pixels p with  c - (r-1)/2 <= p <= c + r/2  for the exact half-pixel
// center c, which is platform-stable integer arithmetic).
struct ReceptiveField {
  std::string layer;
  int neuron_i = 0, neuron_j = 0;
  int top = 0, left = 0, bottom = 0, right = 0;
  bool clipped = false;
  int full_size = 0;

  int height() const { return bottom - top + 1; }
  int width() const { return right - left + 1; }
};

template <typename T>
ReceptiveField project(const ModelGraphT<T>& model, const std::string& layer, int neuron_i,
                       int neuron_j, int input_h, int input_w);

// Copies the rectangle across all channels. Clipped regions are simply
// absent; the patch shrinks.
template <typename T>
TensorT<T> extract_patch(const TensorT<T>& image, const ReceptiveField& rfield);

}  // namespace netscope::rf

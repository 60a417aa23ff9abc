#include "netscope/rf.hpp"

#include <vector>

namespace netscope::rf {

namespace {

int floor_div(int a, int b) {
  int q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}
int ceil_div(int a, int b) { return floor_div(a + b - 1, b); }

}  // namespace

RFGeometry compose(const RFGeometry& g, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1) throw Error("rf::compose: kernel and stride must be >= 1");
  RFGeometry out;
  out.size = g.size + (kernel - 1) * g.jump;
  out.jump = g.jump * stride;
  // ((k-1)/2 - p) * j in half-pixel units: (k-1) is doubled by the unit.
  out.center_half = g.center_half + ((kernel - 1) - 2 * pad) * g.jump;
  out.merged_unequal = g.merged_unequal;
  return out;
}

RFGeometry merge_add(const RFGeometry& a, const RFGeometry& b) {
  if (a.jump != b.jump)
    throw Error("rf::merge_add: branch jumps disagree (" + std::to_string(a.jump) + " vs " +
                std::to_string(b.jump) + ")");
  if (a.center_half != b.center_half)
    throw Error("rf::merge_add: branch centers disagree");
  RFGeometry out = a;
  out.size = std::max(a.size, b.size);
  out.merged_unequal = a.merged_unequal || b.merged_unequal || a.size != b.size;
  return out;
}

namespace {

template <typename T>
std::vector<RFGeometry> geometry_trace(const ModelGraphT<T>& model,
                                       std::vector<bool>& defined) {
  std::vector<RFGeometry> geoms(model.layers.size());
  defined.assign(model.layers.size(), false);
  auto input_geom = [&](const std::string& name, const std::string& at) -> RFGeometry {
    if (name == "input") return identity_geometry();
    int idx = model.layer_index(name);
    if (!defined[idx])
      throw Error("receptive field geometry undefined upstream of '" + at + "'");
    return geoms[idx];
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& ls = model.layers[i];
    switch (ls.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool:
        geoms[i] = compose(input_geom(ls.inputs[0], ls.name), ls.kernel, ls.stride, ls.pad);
        defined[i] = true;
        break;
      case LayerKind::bn:
      case LayerKind::relu:
        geoms[i] = input_geom(ls.inputs[0], ls.name);
        defined[i] = true;
        break;
      case LayerKind::add:
        geoms[i] = merge_add(input_geom(ls.inputs[0], ls.name),
                             input_geom(ls.inputs[1], ls.name));
        defined[i] = true;
        break;
      case LayerKind::avgpool:
      case LayerKind::linear:
        defined[i] = false;  // global support; geometry not meaningful
        break;
    }
  }
  return geoms;
}

}  // namespace

template <typename T>
RFGeometry geometry_of(const ModelGraphT<T>& model, const std::string& layer) {
  const std::string name = resolve_layer(model, layer);
  const int idx = model.layer_index(name);
  std::vector<bool> defined;
  auto geoms = geometry_trace(model, defined);
  if (!defined[idx])
    throw Error("receptive field geometry is undefined for layer '" + name + "' (" +
                layer_kind_name(model.layers[idx].kind) + ")");
  return geoms[idx];
}

template <typename T>
std::map<std::string, RFGeometry> geometry_table(const ModelGraphT<T>& model) {
  std::vector<bool> defined;
  auto geoms = geometry_trace(model, defined);
  std::map<std::string, RFGeometry> table;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (defined[i]) table.emplace(model.layers[i].name, geoms[i]);
  return table;
}

template <typename T>
ReceptiveField project(const ModelGraphT<T>& model, const std::string& layer, int neuron_i,
                       int neuron_j, int input_h, int input_w) {
  const std::string name = resolve_layer(model, layer);
  const RFGeometry g = geometry_of(model, name);
  const auto shapes = trace_shapes(model, model.meta.in_channels, input_h, input_w);
  const Shape3 fm = shapes.at(name);
  if (neuron_i < 0 || neuron_i >= fm.h || neuron_j < 0 || neuron_j >= fm.w)
    throw Error("neuron (" + std::to_string(neuron_i) + "," + std::to_string(neuron_j) +
                ") out of bounds for '" + name + "' feature map " + std::to_string(fm.h) +
                "x" + std::to_string(fm.w));

  ReceptiveField rfield;
  rfield.layer = name;
  rfield.neuron_i = neuron_i;
  rfield.neuron_j = neuron_j;
  rfield.full_size = g.size;
  auto span = [&](int neuron, int extent, int& lo, int& hi) {
    const int center_half = g.center_half + 2 * neuron * g.jump;
    lo = ceil_div(center_half - (g.size - 1), 2);
    hi = floor_div(center_half + g.size, 2);
    if (lo < 0) {
      lo = 0;
      rfield.clipped = true;
    }
    if (hi > extent - 1) {
      hi = extent - 1;
      rfield.clipped = true;
    }
    if (lo > hi) throw Error("receptive field of '" + name + "' lies outside the image");
  };
  span(neuron_i, input_h, rfield.top, rfield.bottom);
  span(neuron_j, input_w, rfield.left, rfield.right);
  return rfield;
}

template <typename T>
TensorT<T> extract_patch(const TensorT<T>& image, const ReceptiveField& rfield) {
  if (image.n() != 1) throw ShapeError("extract_patch expects a single image, got " +
                                       image.dims_str());
  if (rfield.top < 0 || rfield.left < 0 || rfield.bottom >= image.h() ||
      rfield.right >= image.w() || rfield.top > rfield.bottom || rfield.left > rfield.right)
    throw Error("receptive field rectangle does not intersect the image");
  TensorT<T> patch(1, image.c(), rfield.height(), rfield.width());
  for (int c = 0; c < image.c(); ++c)
    for (int y = 0; y < rfield.height(); ++y)
      for (int x = 0; x < rfield.width(); ++x)
        patch.at(0, c, y, x) = image.at(0, c, rfield.top + y, rfield.left + x);
  return patch;
}

#define NETSCOPE_INSTANTIATE_RF(T)                                                       \
  template RFGeometry geometry_of<T>(const ModelGraphT<T>&, const std::string&);         \
  template std::map<std::string, RFGeometry> geometry_table<T>(const ModelGraphT<T>&);   \
  template ReceptiveField project<T>(const ModelGraphT<T>&, const std::string&, int,     \
                                     int, int, int);                                     \
  template TensorT<T> extract_patch<T>(const TensorT<T>&, const ReceptiveField&);

NETSCOPE_INSTANTIATE_RF(float)
NETSCOPE_INSTANTIATE_RF(double)

}  // namespace netscope::rf

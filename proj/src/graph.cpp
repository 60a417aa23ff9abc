#include "netscope/graph.hpp"

#include <algorithm>
#include <cmath>

#include "netscope/rng.hpp"

namespace netscope {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::bn: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::linear: return "linear";
    case LayerKind::add: return "add";
  }
  return "?";
}

template <typename T>
const LayerSpec& ModelGraphT<T>::layer(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw Error("unknown layer '" + name + "'");
  return layers[it->second];
}

template <typename T>
int ModelGraphT<T>::layer_index(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw Error("unknown layer '" + name + "'");
  return it->second;
}

template <typename T>
void validate_graph(const ModelGraphT<T>& model) {
  if (model.layers.empty()) throw Error("graph has no layers");
  std::unordered_map<std::string, int> seen;
  for (int i = 0; i < static_cast<int>(model.layers.size()); ++i) {
    const LayerSpec& ls = model.layers[i];
    if (ls.name.empty() || ls.name == "input")
      throw Error("bad layer name '" + ls.name + "'");
    if (!seen.emplace(ls.name, i).second)
      throw Error("duplicate layer name '" + ls.name + "'");
    const std::size_t want_inputs = ls.kind == LayerKind::add ? 2 : 1;
    if (ls.inputs.size() != want_inputs)
      throw Error("layer '" + ls.name + "' (" + layer_kind_name(ls.kind) + ") needs " +
                  std::to_string(want_inputs) + " inputs, has " +
                  std::to_string(ls.inputs.size()));
    for (const std::string& in : ls.inputs) {
      if (in == "input") continue;
      auto it = seen.find(in);
      if (it == seen.end() || it->second >= i)
        throw Error("layer '" + ls.name + "' references '" + in +
                    "' which is not an earlier layer");
    }
    switch (ls.kind) {
      case LayerKind::conv: {
        auto it = model.conv_params.find(ls.name);
        if (it == model.conv_params.end())
          throw Error("conv layer '" + ls.name + "' has no parameters");
        if (it->second.w.out_channels() != ls.out_channels ||
            it->second.w.kh() != ls.kernel || it->second.w.kw() != ls.kernel)
          throw ShapeError("conv layer '" + ls.name + "' parameter dims disagree with spec");
        if (ls.has_bias != !it->second.bias.empty())
          throw Error("conv layer '" + ls.name + "' bias presence disagrees with spec");
        break;
      }
      case LayerKind::bn:
        if (!model.bn_params.count(ls.name))
          throw Error("bn layer '" + ls.name + "' has no parameters");
        model.bn_params.at(ls.name).check();
        break;
      case LayerKind::linear:
        if (!model.linear_params.count(ls.name))
          throw Error("linear layer '" + ls.name + "' has no parameters");
        break;
      default: break;
    }
  }
  // Exactly one sink, and it is the last layer.
  std::unordered_map<std::string, int> consumers;
  bool input_used = false;
  for (const LayerSpec& ls : model.layers)
    for (const std::string& in : ls.inputs) {
      if (in == "input") input_used = true;
      else ++consumers[in];
    }
  if (!input_used) throw Error("no layer consumes the graph input");
  int sinks = 0;
  for (const LayerSpec& ls : model.layers)
    if (consumers.find(ls.name) == consumers.end()) ++sinks;
  if (sinks != 1 || consumers.count(model.layers.back().name))
    throw Error("graph must have exactly one output (the last layer)");
  // Shape consistency for the declared input dims.
  trace_shapes(model, model.meta.in_channels, model.meta.input_h, model.meta.input_w);
}

template <typename T>
std::map<std::string, Shape3> trace_shapes(const ModelGraphT<T>& model, int in_c, int in_h,
                                           int in_w) {
  std::map<std::string, Shape3> shapes;
  auto shape_of = [&](const std::string& name) -> Shape3 {
    if (name == "input") return {in_c, in_h, in_w};
    auto it = shapes.find(name);
    if (it == shapes.end()) throw Error("shape trace: unknown layer '" + name + "'");
    return it->second;
  };
  for (const LayerSpec& ls : model.layers) {
    Shape3 in = shape_of(ls.inputs[0]);
    Shape3 out;
    switch (ls.kind) {
      case LayerKind::conv: {
        const auto& p = model.conv_params.at(ls.name);
        if (p.w.in_channels() != in.c)
          throw ShapeError("conv '" + ls.name + "' expects " +
                           std::to_string(p.w.in_channels()) + " channels, input has " +
                           std::to_string(in.c));
        out = {ls.out_channels, ops::conv_out_extent(in.h, ls.pad, ls.kernel, ls.stride),
               ops::conv_out_extent(in.w, ls.pad, ls.kernel, ls.stride)};
        if (out.h < 1 || out.w < 1)
          throw ShapeError("conv '" + ls.name + "' produces empty output");
        break;
      }
      case LayerKind::maxpool:
        out = {in.c, ops::conv_out_extent(in.h, ls.pad, ls.kernel, ls.stride),
               ops::conv_out_extent(in.w, ls.pad, ls.kernel, ls.stride)};
        if (out.h < 1 || out.w < 1)
          throw ShapeError("maxpool '" + ls.name + "' produces empty output");
        break;
      case LayerKind::bn:
        if (model.bn_params.at(ls.name).channels() != in.c)
          throw ShapeError("bn '" + ls.name + "' channel count mismatch");
        out = in;
        break;
      case LayerKind::relu: out = in; break;
      case LayerKind::avgpool: out = {in.c, 1, 1}; break;
      case LayerKind::linear: {
        const auto& p = model.linear_params.at(ls.name);
        if (p.weight.c() != in.c * in.h * in.w)
          throw ShapeError("linear '" + ls.name + "' expects " + std::to_string(p.weight.c()) +
                           " inputs, got " + std::to_string(in.c * in.h * in.w));
        out = {p.weight.n(), 1, 1};
        break;
      }
      case LayerKind::add: {
        Shape3 rhs = shape_of(ls.inputs[1]);
        if (!(in == rhs))
          throw ShapeError("add '" + ls.name + "' inputs disagree: (" + std::to_string(in.c) +
                           "," + std::to_string(in.h) + "," + std::to_string(in.w) + ") vs (" +
                           std::to_string(rhs.c) + "," + std::to_string(rhs.h) + "," +
                           std::to_string(rhs.w) + ")");
        out = in;
        break;
      }
    }
    shapes[ls.name] = out;
  }
  return shapes;
}

template <typename T>
std::string resolve_layer(const ModelGraphT<T>& model, const std::string& name) {
  if (name.size() > 4 && name.rfind("conv", 0) == 0 &&
      name.find_first_not_of("0123456789", 4) == std::string::npos &&
      !model.has_layer(name)) {
    std::size_t n = std::stoul(name.substr(4));
    if (n >= 1 && n <= model.main_path_convs.size()) return model.main_path_convs[n - 1];
    throw Error("main-path conv alias '" + name + "' out of range (1.." +
                std::to_string(model.main_path_convs.size()) + ")");
  }
  return name;
}

namespace {

template <typename T>
void fill_normal(TensorT<T>& t, Rng rng, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.gaussian() * stddev);
}

}  // namespace

template <typename T>
ModelGraphT<T> build_model(const ModelMeta& meta, std::uint64_t seed) {
  if (meta.num_classes < 2) throw Error("num_classes must be >= 2");
  if (meta.stage_blocks.empty()) throw Error("stage_blocks must be non-empty");
  if (meta.arch != "resnet" && meta.arch != "plain")
    throw Error("arch must be 'resnet' or 'plain', got '" + meta.arch + "'");
  if (meta.stem != "imagenet" && meta.stem != "compact")
    throw Error("stem must be 'imagenet' or 'compact', got '" + meta.stem + "'");

  ModelGraphT<T> m;
  m.meta = meta;
  Rng root(seed);

  auto add_layer = [&](LayerSpec ls) {
    m.index[ls.name] = static_cast<int>(m.layers.size());
    m.layers.push_back(std::move(ls));
  };
  auto add_conv = [&](const std::string& name, int kernel, int stride, int pad, int in_c,
                      int out_c, const std::string& from) {
    LayerSpec ls;
    ls.name = name;
    ls.kind = LayerKind::conv;
    ls.kernel = kernel;
    ls.stride = stride;
    ls.pad = pad;
    ls.out_channels = out_c;
    ls.inputs = {from};
    add_layer(std::move(ls));
    ConvParamT<T> p;
    p.w = ConvWeightsT<T>(out_c, in_c, kernel, kernel);
    const double fan_out = static_cast<double>(out_c) * kernel * kernel;
    fill_normal(p.w.w, root.split(m.layers.size()), std::sqrt(2.0 / fan_out));
    m.conv_params.emplace(name, std::move(p));
  };
  auto add_bn = [&](const std::string& name, int channels, const std::string& from) {
    LayerSpec ls;
    ls.name = name;
    ls.kind = LayerKind::bn;
    ls.inputs = {from};
    add_layer(std::move(ls));
    m.bn_params.emplace(name, BatchNormStateT<T>(channels));
  };
  auto add_simple = [&](const std::string& name, LayerKind kind, const std::string& from,
                        int kernel = 0, int stride = 1, int pad = 0) {
    LayerSpec ls;
    ls.name = name;
    ls.kind = kind;
    ls.kernel = kernel;
    ls.stride = stride;
    ls.pad = pad;
    ls.inputs = {from};
    add_layer(std::move(ls));
  };

  const int base = meta.base_channels;
  if (meta.stem == "imagenet")
    add_conv("stem.conv", 7, 2, 3, meta.in_channels, base, "input");
  else
    add_conv("stem.conv", 3, 1, 1, meta.in_channels, base, "input");
  add_bn("stem.bn", base, "stem.conv");
  add_simple("stem.relu", LayerKind::relu, "stem.bn");
  add_simple("stem.maxpool", LayerKind::maxpool, "stem.relu", 3, 2, 1);
  m.main_path_convs.push_back("stem.conv");

  std::string prev = "stem.maxpool";
  int prev_ch = base;
  for (int s = 1; s <= static_cast<int>(meta.stage_blocks.size()); ++s) {
    const int ch = base << (s - 1);
    for (int b = 0; b < meta.stage_blocks[s - 1]; ++b) {
      const std::string bn = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const bool transition = b == 0 && (ch != prev_ch);
      const int stride1 = transition ? 2 : 1;

      add_conv(bn + ".conv1", 3, stride1, 1, prev_ch, ch, prev);
      add_bn(bn + ".bn1", ch, bn + ".conv1");
      add_simple(bn + ".relu1", LayerKind::relu, bn + ".bn1");
      add_conv(bn + ".conv2", 3, 1, 1, ch, ch, bn + ".relu1");
      add_bn(bn + ".bn2", ch, bn + ".conv2");
      m.main_path_convs.push_back(bn + ".conv1");
      m.main_path_convs.push_back(bn + ".conv2");

      if (meta.arch == "resnet") {
        std::string skip = prev;
        if (transition) {
          const std::string dn = "downsample" + std::to_string(s);
          add_conv(dn + ".conv", 1, 2, 0, prev_ch, ch, prev);
          add_bn(dn + ".bn", ch, dn + ".conv");
          skip = dn + ".bn";
        }
        LayerSpec ls;
        ls.name = bn + ".add";
        ls.kind = LayerKind::add;
        ls.inputs = {skip, bn + ".bn2"};  // skip side first
        add_layer(std::move(ls));
        add_simple(bn + ".relu2", LayerKind::relu, bn + ".add");
      } else {
        add_simple(bn + ".relu2", LayerKind::relu, bn + ".bn2");
      }
      prev = bn + ".relu2";
      prev_ch = ch;
    }
  }

  add_simple("head.avgpool", LayerKind::avgpool, prev);
  {
    LayerSpec ls;
    ls.name = "head.linear";
    ls.kind = LayerKind::linear;
    ls.out_channels = meta.num_classes;
    ls.inputs = {"head.avgpool"};
    add_layer(std::move(ls));
    ops::LinearParamT<T> p;
    p.weight = TensorT<T>(meta.num_classes, prev_ch, 1, 1);
    fill_normal(p.weight, root.split(m.layers.size()), std::sqrt(1.0 / prev_ch));
    p.bias.assign(meta.num_classes, T(0));
    m.linear_params.emplace("head.linear", std::move(p));
  }

  validate_graph(m);
  return m;
}

template <typename T>
ModelGraphT<T> build_resnet34(int num_classes, std::uint64_t seed) {
  ModelMeta meta;
  meta.arch = "resnet";
  meta.stage_blocks = {3, 4, 6, 3};
  meta.base_channels = 64;
  meta.input_h = meta.input_w = 224;
  meta.num_classes = num_classes;
  meta.stem = "imagenet";
  return build_model<T>(meta, seed);
}

template <typename T>
ModelGraphT<T> build_plainnet34(int num_classes, std::uint64_t seed) {
  ModelMeta meta;
  meta.arch = "plain";
  meta.stage_blocks = {3, 4, 6, 3};
  meta.base_channels = 64;
  meta.input_h = meta.input_w = 224;
  meta.num_classes = num_classes;
  meta.stem = "imagenet";
  return build_model<T>(meta, seed);
}

template <typename T>
ModelGraphT<T> build_scaled(const std::string& arch, const std::vector<int>& stage_blocks,
                            int base_channels, int input_h, int input_w, int num_classes,
                            std::uint64_t seed) {
  ModelMeta meta;
  meta.arch = arch;
  meta.stage_blocks = stage_blocks;
  meta.base_channels = base_channels;
  meta.input_h = input_h;
  meta.input_w = input_w;
  meta.num_classes = num_classes;
  meta.stem = std::min(input_h, input_w) >= 96 ? "imagenet" : "compact";
  return build_model<T>(meta, seed);
}

namespace {

template <typename T>
struct LayerEval {
  TensorT<T> value;
  int pending_consumers = 0;
};

}  // namespace

template <typename T>
ForwardResult<T> forward(ModelGraphT<T>& model, const TensorT<T>& x, RunMode mode,
                         const std::set<std::string>& capture, const LayerHook<T>* hook) {
  for (const std::string& name : capture)
    if (!model.has_layer(name)) throw Error("capture: unknown layer '" + name + "'");

  std::unordered_map<std::string, int> consumers;
  for (const LayerSpec& ls : model.layers)
    for (const std::string& in : ls.inputs)
      if (in != "input") ++consumers[in];

  ForwardResult<T> result;
  std::unordered_map<std::string, LayerEval<T>> values;
  auto get = [&](const std::string& name) -> const TensorT<T>& {
    if (name == "input") return x;
    return values.at(name).value;
  };
  auto release = [&](const std::string& name) {
    if (name == "input") return;
    auto& e = values.at(name);
    if (--e.pending_consumers <= 0) values.erase(name);
  };

  const BnMode bn_mode = mode == RunMode::train ? BnMode::train : BnMode::eval;
  for (const LayerSpec& ls : model.layers) {
    TensorT<T> out;
    switch (ls.kind) {
      case LayerKind::conv: {
        const auto& p = model.conv_params.at(ls.name);
        out = ops::conv2d_forward(get(ls.inputs[0]), p.w,
                                  p.bias.empty() ? nullptr : &p.bias,
                                  {ls.stride, ls.stride}, {ls.pad, ls.pad});
        break;
      }
      case LayerKind::bn:
        out = ops::batchnorm_forward(get(ls.inputs[0]), model.bn_params.at(ls.name), bn_mode);
        break;
      case LayerKind::relu: out = ops::relu_forward(get(ls.inputs[0])); break;
      case LayerKind::maxpool:
        out = ops::maxpool_forward(get(ls.inputs[0]), ls.kernel, ls.stride, ls.pad).out;
        break;
      case LayerKind::avgpool: out = ops::global_avgpool_forward(get(ls.inputs[0])); break;
      case LayerKind::linear:
        out = ops::linear_forward(get(ls.inputs[0]), model.linear_params.at(ls.name));
        break;
      case LayerKind::add: out = ops::add_forward(get(ls.inputs[0]), get(ls.inputs[1])); break;
    }
    if (hook && *hook) (*hook)(ls.name, out);
    for (const std::string& in : ls.inputs) release(in);
    if (capture.count(ls.name)) result.captured.emplace(ls.name, out);
    auto& e = values[ls.name];
    e.pending_consumers = consumers.count(ls.name) ? consumers[ls.name] : 0;
    e.value = std::move(out);
  }
  result.output = std::move(values.at(model.layers.back().name).value);
  return result;
}

template <typename T>
const TensorT<T>& forward_full(ModelGraphT<T>& model, const TensorT<T>& x, RunMode mode,
                               ForwardCache<T>& cache) {
  cache.input = x;
  cache.mode = mode;
  cache.outputs.assign(model.layers.size(), TensorT<T>());
  cache.argmax.assign(model.layers.size(), {});
  cache.bn_stats.assign(model.layers.size(), {});

  auto get = [&](const std::string& name) -> const TensorT<T>& {
    if (name == "input") return cache.input;
    return cache.outputs[model.layer_index(name)];
  };
  const BnMode bn_mode = mode == RunMode::train ? BnMode::train : BnMode::eval;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& ls = model.layers[i];
    switch (ls.kind) {
      case LayerKind::conv: {
        const auto& p = model.conv_params.at(ls.name);
        cache.outputs[i] = ops::conv2d_forward(get(ls.inputs[0]), p.w,
                                               p.bias.empty() ? nullptr : &p.bias,
                                               {ls.stride, ls.stride}, {ls.pad, ls.pad});
        break;
      }
      case LayerKind::bn:
        cache.outputs[i] = ops::batchnorm_forward(get(ls.inputs[0]), model.bn_params.at(ls.name),
                                                  bn_mode,
                                                  bn_mode == BnMode::train ? &cache.bn_stats[i]
                                                                           : nullptr);
        break;
      case LayerKind::relu: cache.outputs[i] = ops::relu_forward(get(ls.inputs[0])); break;
      case LayerKind::maxpool: {
        auto r = ops::maxpool_forward(get(ls.inputs[0]), ls.kernel, ls.stride, ls.pad);
        cache.outputs[i] = std::move(r.out);
        cache.argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::avgpool:
        cache.outputs[i] = ops::global_avgpool_forward(get(ls.inputs[0]));
        break;
      case LayerKind::linear:
        cache.outputs[i] = ops::linear_forward(get(ls.inputs[0]), model.linear_params.at(ls.name));
        break;
      case LayerKind::add:
        cache.outputs[i] = ops::add_forward(get(ls.inputs[0]), get(ls.inputs[1]));
        break;
    }
  }
  return cache.outputs.back();
}

namespace {

template <typename T>
void accumulate(TensorT<T>& dst, TensorT<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  if (!dst.same_dims(src))
    throw ShapeError("gradient accumulation dims " + dst.dims_str() + " vs " + src.dims_str());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
TensorT<T> backward_from(const ModelGraphT<T>& model, const ForwardCache<T>& cache,
                         const std::string& seed_layer, const TensorT<T>& seed_grad,
                         ParamGrads<T>* param_grads) {
  if (cache.outputs.size() != model.layers.size())
    throw Error("backward_from: cache does not belong to this model");
  const int seed_idx = model.layer_index(seed_layer);
  if (!seed_grad.same_dims(cache.outputs[seed_idx]))
    throw ShapeError("backward_from: seed grad " + seed_grad.dims_str() +
                     " vs activation " + cache.outputs[seed_idx].dims_str());

  std::vector<TensorT<T>> grads(model.layers.size());
  grads[seed_idx] = seed_grad;
  TensorT<T> grad_input(cache.input.n(), cache.input.c(), cache.input.h(), cache.input.w());

  auto value_of = [&](const std::string& name) -> const TensorT<T>& {
    if (name == "input") return cache.input;
    return cache.outputs[model.layer_index(name)];
  };
  auto push = [&](const std::string& name, TensorT<T>&& g) {
    if (name == "input") accumulate(grad_input, std::move(g));
    else accumulate(grads[model.layer_index(name)], std::move(g));
  };

  const BnMode bn_mode = cache.mode == RunMode::train ? BnMode::train : BnMode::eval;
  for (int i = seed_idx; i >= 0; --i) {
    if (grads[i].empty()) continue;
    const LayerSpec& ls = model.layers[i];
    TensorT<T> go = std::move(grads[i]);
    if (!go.all_finite())
      throw NumericError("non-finite gradient at layer '" + ls.name + "'");
    const TensorT<T>& xin = value_of(ls.inputs[0]);
    switch (ls.kind) {
      case LayerKind::conv: {
        const auto& p = model.conv_params.at(ls.name);
        auto g = ops::conv2d_backward(go, xin, p.w, !p.bias.empty(), {ls.stride, ls.stride},
                                      {ls.pad, ls.pad});
        if (param_grads) {
          param_grads->conv_w[ls.name] = std::move(g.grad_w.w);
          if (!p.bias.empty()) param_grads->conv_b[ls.name] = std::move(g.grad_bias);
        }
        push(ls.inputs[0], std::move(g.grad_x));
        break;
      }
      case LayerKind::bn: {
        auto g = ops::batchnorm_backward(go, xin, model.bn_params.at(ls.name), bn_mode,
                                         bn_mode == BnMode::train ? &cache.bn_stats[i] : nullptr);
        if (param_grads) {
          param_grads->bn_gamma[ls.name] = std::move(g.grad_gamma);
          param_grads->bn_beta[ls.name] = std::move(g.grad_beta);
        }
        push(ls.inputs[0], std::move(g.grad_x));
        break;
      }
      case LayerKind::relu: push(ls.inputs[0], ops::relu_backward(go, xin)); break;
      case LayerKind::maxpool:
        push(ls.inputs[0], ops::maxpool_backward(go, xin, cache.argmax[i]));
        break;
      case LayerKind::avgpool:
        push(ls.inputs[0], ops::global_avgpool_backward(go, xin.h(), xin.w()));
        break;
      case LayerKind::linear: {
        auto g = ops::linear_backward(go, xin, model.linear_params.at(ls.name));
        if (param_grads) {
          param_grads->linear_w[ls.name] = std::move(g.grad_weight);
          param_grads->linear_b[ls.name] = std::move(g.grad_bias);
        }
        push(ls.inputs[0], std::move(g.grad_x));
        break;
      }
      case LayerKind::add: {
        TensorT<T> copy = go;
        push(ls.inputs[0], std::move(copy));
        push(ls.inputs[1], std::move(go));
        break;
      }
    }
  }
  return grad_input;
}

template <typename T>
std::pair<T, TensorT<T>> backward_to_input(ModelGraphT<T>& model, const TensorT<T>& x,
                                           const ActivationTarget& target) {
  if (x.n() != 1) throw Error("backward_to_input expects a single-sample input");
  const std::string layer = resolve_layer(model, target.layer);
  const int idx = model.layer_index(layer);

  ForwardCache<T> cache;
  forward_full(model, x, RunMode::eval, cache);
  const TensorT<T>& act = cache.outputs[idx];
  if (target.channel < 0 || target.channel >= act.c())
    throw Error("target channel " + std::to_string(target.channel) + " out of range for '" +
                layer + "' with " + std::to_string(act.c()) + " channels");

  TensorT<T> seed(act.n(), act.c(), act.h(), act.w());
  T value;
  if (target.mode == ActivationTarget::Mode::neuron) {
    if (target.neuron_i < 0 || target.neuron_i >= act.h() || target.neuron_j < 0 ||
        target.neuron_j >= act.w())
      throw Error("target neuron out of bounds for '" + layer + "'");
    value = act.at(0, target.channel, target.neuron_i, target.neuron_j);
    seed.at(0, target.channel, target.neuron_i, target.neuron_j) = T(1);
  } else {
    const std::size_t hw = static_cast<std::size_t>(act.h()) * act.w();
    T acc = T(0);
    const T* plane = act.data() + act.plane(0, target.channel);
    for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
    value = acc / static_cast<T>(hw);
    T* sp = seed.data() + seed.plane(0, target.channel);
    for (std::size_t i = 0; i < hw; ++i) sp[i] = T(1) / static_cast<T>(hw);
  }
  TensorT<T> grad = backward_from(model, cache, layer, seed, nullptr);
  return {value, std::move(grad)};
}

ModelGraph64 widen(const ModelGraph& model) {
  ModelGraph64 out;
  out.layers = model.layers;
  out.index = model.index;
  out.meta = model.meta;
  out.main_path_convs = model.main_path_convs;
  for (const auto& [name, p] : model.conv_params) {
    ConvParamT<double> q;
    q.w = ConvWeightsT<double>(p.w.out_channels(), p.w.in_channels(), p.w.kh(), p.w.kw());
    for (std::size_t i = 0; i < p.w.w.size(); ++i) q.w.w[i] = p.w.w[i];
    q.bias.assign(p.bias.begin(), p.bias.end());
    out.conv_params.emplace(name, std::move(q));
  }
  for (const auto& [name, s] : model.bn_params) {
    BatchNormState64 t;
    t.gamma.assign(s.gamma.begin(), s.gamma.end());
    t.beta.assign(s.beta.begin(), s.beta.end());
    t.running_mean.assign(s.running_mean.begin(), s.running_mean.end());
    t.running_var.assign(s.running_var.begin(), s.running_var.end());
    t.epsilon = s.epsilon;
    t.momentum = s.momentum;
    out.bn_params.emplace(name, std::move(t));
  }
  for (const auto& [name, p] : model.linear_params) {
    ops::LinearParamT<double> q;
    q.weight = TensorT<double>(p.weight.n(), p.weight.c(), 1, 1);
    for (std::size_t i = 0; i < p.weight.size(); ++i) q.weight[i] = p.weight[i];
    q.bias.assign(p.bias.begin(), p.bias.end());
    out.linear_params.emplace(name, std::move(q));
  }
  return out;
}

#define NETSCOPE_INSTANTIATE_GRAPH(T)                                                         \
  template const LayerSpec& ModelGraphT<T>::layer(const std::string&) const;                  \
  template int ModelGraphT<T>::layer_index(const std::string&) const;                         \
  template void validate_graph<T>(const ModelGraphT<T>&);                                     \
  template std::map<std::string, Shape3> trace_shapes<T>(const ModelGraphT<T>&, int, int,     \
                                                         int);                                \
  template std::string resolve_layer<T>(const ModelGraphT<T>&, const std::string&);           \
  template ModelGraphT<T> build_model<T>(const ModelMeta&, std::uint64_t);                    \
  template ModelGraphT<T> build_resnet34<T>(int, std::uint64_t);                              \
  template ModelGraphT<T> build_plainnet34<T>(int, std::uint64_t);                            \
  template ModelGraphT<T> build_scaled<T>(const std::string&, const std::vector<int>&, int,   \
                                          int, int, int, std::uint64_t);                      \
  template ForwardResult<T> forward<T>(ModelGraphT<T>&, const TensorT<T>&, RunMode,           \
                                       const std::set<std::string>&, const LayerHook<T>*);    \
  template const TensorT<T>& forward_full<T>(ModelGraphT<T>&, const TensorT<T>&, RunMode,     \
                                             ForwardCache<T>&);                               \
  template TensorT<T> backward_from<T>(const ModelGraphT<T>&, const ForwardCache<T>&,         \
                                       const std::string&, const TensorT<T>&,                 \
                                       ParamGrads<T>*);                                       \
  template std::pair<T, TensorT<T>> backward_to_input<T>(ModelGraphT<T>&, const TensorT<T>&, \
                                                         const ActivationTarget&);

NETSCOPE_INSTANTIATE_GRAPH(float)
NETSCOPE_INSTANTIATE_GRAPH(double)

}  // namespace netscope

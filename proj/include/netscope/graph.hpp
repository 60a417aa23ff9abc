#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "netscope/ops.hpp"
#include "netscope/tensor.hpp"

namespace netscope {

enum class LayerKind { conv, bn, relu, maxpool, avgpool, linear, add };

std::string layer_kind_name(LayerKind k);

// One node of the model DAG. Conv/maxpool geometry is square (the block
// grammar never needs rectangular kernels). Input edges name earlier layers,
// or the reserved name "input" for the graph input.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_channels = 0;  // conv / linear
  bool has_bias = false; // conv only; linear always carries a bias
  std::vector<std::string> inputs;
};

// Architecture description. Enough to rebuild the exact graph from checkpoint
// metadata.
struct ModelMeta {
  std::string arch = "resnet";  // "resnet" | "plain"
  std::vector<int> stage_blocks;
  int base_channels = 64;
  int input_h = 224, input_w = 224;
  int in_channels = 3;
  int num_classes = 1000;
  std::string stem = "imagenet";  // "imagenet": 7x7/s2 conv + 3x3/s2 maxpool;
                                  // "compact": 3x3/s1 conv + 3x3/s2 maxpool
};

template <typename T>
struct ConvParamT {
  ConvWeightsT<T> w;
  std::vector<T> bias;  // empty when has_bias is false
};

// Model DAG plus its parameter set. Layers are stored in topological order;
// execution order is fixed by construction, so capture results are
// run-independent.
template <typename T>
struct ModelGraphT {
  std::vector<LayerSpec> layers;
  std::unordered_map<std::string, int> index;
  std::unordered_map<std::string, ConvParamT<T>> conv_params;
  std::unordered_map<std::string, BatchNormStateT<T>> bn_params;
  std::unordered_map<std::string, ops::LinearParamT<T>> linear_params;
  ModelMeta meta;
  // Main-path conv layer names in depth order; "conv1" aliases the stem conv.
  std::vector<std::string> main_path_convs;

  bool has_layer(const std::string& name) const { return index.count(name) != 0; }
  const LayerSpec& layer(const std::string& name) const;
  int layer_index(const std::string& name) const;
};

using ModelGraph = ModelGraphT<float>;
using ModelGraph64 = ModelGraphT<double>;

// Structural checks: unique names, edges only to earlier layers, add nodes
// binary, exactly one sink, parameters present and dimensioned. Throws on
// violation. Called by the builders; call it yourself after hand-assembly.
template <typename T>
void validate_graph(const ModelGraphT<T>& model);

// Per-layer output shape (c, h, w) for a given input, keyed by layer name.
struct Shape3 {
  int c = 0, h = 0, w = 0;
  bool operator==(const Shape3&) const = default;
};
template <typename T>
std::map<std::string, Shape3> trace_shapes(const ModelGraphT<T>& model, int in_c, int in_h,
                                           int in_w);

// Resolves "conv<N>" main-path aliases (conv1 = stem conv) to layer names;
// returns other names unchanged.
template <typename T>
std::string resolve_layer(const ModelGraphT<T>& model, const std::string& name);

// Builders. `seed` drives parameter init (Kaiming fan-out normal for convs,
// gamma=1/beta=0 for BN).
template <typename T = float>
ModelGraphT<T> build_resnet34(int num_classes, std::uint64_t seed = 0);
template <typename T = float>
ModelGraphT<T> build_plainnet34(int num_classes, std::uint64_t seed = 0);
template <typename T = float>
ModelGraphT<T> build_scaled(const std::string& arch, const std::vector<int>& stage_blocks,
                            int base_channels, int input_h, int input_w, int num_classes,
                            std::uint64_t seed = 0);
template <typename T = float>
ModelGraphT<T> build_model(const ModelMeta& meta, std::uint64_t seed = 0);

enum class RunMode { train, eval };

// Applied to each layer's freshly computed output, before consumers see it.
// Used by the noise-injection probe.
template <typename T>
using LayerHook = std::function<void(const std::string& layer, TensorT<T>& value)>;

template <typename T>
struct ForwardResult {
  TensorT<T> output;
  std::map<std::string, TensorT<T>> captured;
};

// Eval/train forward. Frees intermediate activations as soon as their last
// consumer ran (captured layers excepted). Train mode updates BN running
// stats in place.
template <typename T>
ForwardResult<T> forward(ModelGraphT<T>& model, const TensorT<T>& x, RunMode mode,
                         const std::set<std::string>& capture = {},
                         const LayerHook<T>* hook = nullptr);

// Full activation cache for a backward pass.
template <typename T>
struct ForwardCache {
  TensorT<T> input;
  RunMode mode = RunMode::eval;
  std::vector<TensorT<T>> outputs;                    // per layer index
  std::vector<std::vector<std::int64_t>> argmax;      // maxpool layers
  std::vector<ops::BnBatchStats<T>> bn_stats;         // bn layers, train mode
};

template <typename T>
const TensorT<T>& forward_full(ModelGraphT<T>& model, const TensorT<T>& x, RunMode mode,
                               ForwardCache<T>& cache);

// Parameter gradients keyed by layer name.
template <typename T>
struct ParamGrads {
  std::unordered_map<std::string, TensorT<T>> conv_w;
  std::unordered_map<std::string, std::vector<T>> conv_b;
  std::unordered_map<std::string, std::vector<T>> bn_gamma;
  std::unordered_map<std::string, std::vector<T>> bn_beta;
  std::unordered_map<std::string, TensorT<T>> linear_w;
  std::unordered_map<std::string, std::vector<T>> linear_b;
};

// Backpropagates `seed_grad` injected at `seed_layer` down to the graph
// input. Returns the input gradient; fills `param_grads` when non-null.
template <typename T>
TensorT<T> backward_from(const ModelGraphT<T>& model, const ForwardCache<T>& cache,
                         const std::string& seed_layer, const TensorT<T>& seed_grad,
                         ParamGrads<T>* param_grads);

// Scalar objective over one captured activation: either a single neuron or a
// channel's spatial mean.
struct ActivationTarget {
  std::string layer;
  int channel = 0;
  enum class Mode { neuron, channel_mean } mode = Mode::neuron;
  int neuron_i = 0, neuron_j = 0;  // used in neuron mode
};

// Exact gradient of the target activation w.r.t. x (eval mode). Also returns
// the objective value.
template <typename T>
std::pair<T, TensorT<T>> backward_to_input(ModelGraphT<T>& model, const TensorT<T>& x,
                                           const ActivationTarget& target);

// Copies structure and parameters into another precision (verification use).
ModelGraph64 widen(const ModelGraph& model);

}  // namespace netscope

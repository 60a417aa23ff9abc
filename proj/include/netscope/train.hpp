#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "netscope/checkpoint.hpp"
#include "netscope/data.hpp"
#include "netscope/graph.hpp"

namespace netscope::train {

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_drop_factor = 10.0;
  int lr_drop_every = 30;
  int epochs = 90;
  int batch = 256;
  std::uint64_t seed = 0;
  bool augment = true;
  std::string config_hash;  // recorded in checkpoints

  void check() const;
};

// lr(epoch) = lr0 / drop_factor^floor(epoch / drop_every)
double lr_at(const TrainConfig& cfg, int epoch);

// Momentum buffers, keyed like the parameter store.
struct Velocity {
  std::unordered_map<std::string, Tensor> conv_w, linear_w;
  std::unordered_map<std::string, std::vector<float>> conv_b, bn_gamma, bn_beta, linear_b;

  std::map<std::string, NamedTensor> to_named() const;
  static Velocity from_named(const std::map<std::string, NamedTensor>& named);
};

// v <- momentum*v + g + wd*theta;  theta <- theta - lr(epoch)*v.
// Weight decay applies to conv and linear weights only, never to BN
// gamma/beta or biases. Throws NumericError naming the layer on NaN grads.
void sgd_step(ModelGraph& model, const ParamGrads<float>& grads, Velocity& velocity,
              const TrainConfig& cfg, int epoch);

// Mean cross-entropy over softmax and the gradient w.r.t. logits (already
// divided by batch size).
struct LossResult {
  double loss = 0.0;
  double top1 = 0.0;
  Tensor grad_logits;
};
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
};

// Deterministic eval-mode pass over the split: eval transform + whitening,
// fixed batching in dataset order. Never mutates model state. The optional
// hook is applied to every layer output (noise-injection probe).
EvalResult evaluate(ModelGraph& model, const data::Dataset& val,
                    const data::WhitenStats& stats, int batch,
                    const LayerHook<float>* hook = nullptr);

struct EpochRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double top1 = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> log;
  data::WhitenStats stats;
  std::string last_checkpoint;
};

// Full recipe: per-epoch shuffle, augment (random resized crop + flip) then
// whiten, SGD with the step-decay schedule, eval + checkpoint every epoch.
// `start_epoch` > 0 resumes (velocity restored by the caller from the
// checkpoint); the run is bit-identical to an uninterrupted one.
TrainResult train(ModelGraph& model, const data::Dataset& train_ds,
                  const data::Dataset& val_ds, const TrainConfig& cfg,
                  const std::string& out_dir, int start_epoch = 0,
                  Velocity velocity = {}, std::ostream* progress = nullptr);

}  // namespace netscope::train

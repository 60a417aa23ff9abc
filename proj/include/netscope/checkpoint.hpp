#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netscope/graph.hpp"

namespace netscope {

// Training metadata carried in the checkpoint's trailing JSON block.
struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<float> whiten_mean, whiten_std;  // empty when not computed
};

// Auxiliary tensor (optimizer state and the like) stored next to parameters.
struct NamedTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

// Binary checkpoint, little-endian:
//   magic "NSCK" | u32 version=1 | u32 tensor_count
//   per tensor: u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 payload
//   u32 meta_len | UTF-8 JSON metadata
// Parameter tensors are named <layer>.{weight,bias,gamma,beta,running_mean,
// running_var} and written in layer order; extra tensors follow, sorted by
// name. Save -> load -> save is byte-identical.
void save_checkpoint(const ModelGraph& model, const std::string& path,
                     const CheckpointMeta& meta,
                     const std::map<std::string, NamedTensor>& extra = {});

struct LoadedCheckpoint {
  ModelGraph model;
  CheckpointMeta meta;
  std::map<std::string, NamedTensor> extra;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Import/export against a JSON manifest (name, dims, byte offset) plus a raw
// f32 blob, for weights converted from external tools. Import fills an
// existing model's parameters; manifest entries with unknown names are
// ignored, missing parameters are an error.
void export_manifest_blob(const ModelGraph& model, const std::string& manifest_path,
                          const std::string& blob_path);
void import_manifest_blob(ModelGraph& model, const std::string& manifest_path,
                          const std::string& blob_path);

}  // namespace netscope

#include "netscope/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

namespace netscope {

namespace {

using ordered_json = nlohmann::ordered_json;

// Visits every parameter tensor in layer order with a stable name scheme.
template <typename ModelT, typename Fn>
void visit_params(ModelT& model, Fn&& fn) {
  for (const LayerSpec& ls : model.layers) {
    switch (ls.kind) {
      case LayerKind::conv: {
        auto& p = model.conv_params.at(ls.name);
        fn(ls.name + ".weight",
           std::vector<std::uint32_t>{static_cast<std::uint32_t>(p.w.out_channels()),
                                      static_cast<std::uint32_t>(p.w.in_channels()),
                                      static_cast<std::uint32_t>(p.w.kh()),
                                      static_cast<std::uint32_t>(p.w.kw())},
           p.w.w.data(), p.w.w.size());
        if (!p.bias.empty())
          fn(ls.name + ".bias", std::vector<std::uint32_t>{static_cast<std::uint32_t>(p.bias.size())},
             p.bias.data(), p.bias.size());
        break;
      }
      case LayerKind::bn: {
        auto& s = model.bn_params.at(ls.name);
        auto one = [&](const char* suffix, auto& vec) {
          fn(ls.name + suffix, std::vector<std::uint32_t>{static_cast<std::uint32_t>(vec.size())},
             vec.data(), vec.size());
        };
        one(".gamma", s.gamma);
        one(".beta", s.beta);
        one(".running_mean", s.running_mean);
        one(".running_var", s.running_var);
        break;
      }
      case LayerKind::linear: {
        auto& p = model.linear_params.at(ls.name);
        fn(ls.name + ".weight",
           std::vector<std::uint32_t>{static_cast<std::uint32_t>(p.weight.n()),
                                      static_cast<std::uint32_t>(p.weight.c())},
           p.weight.data(), p.weight.size());
        fn(ls.name + ".bias", std::vector<std::uint32_t>{static_cast<std::uint32_t>(p.bias.size())},
           p.bias.data(), p.bias.size());
        break;
      }
      default: break;
    }
  }
}

void put_u16(std::ostream& os, std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

struct Reader {
  std::ifstream in;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw CheckpointError(CheckpointError::Kind::truncated,
                            std::string("checkpoint truncated while reading ") + what);
  }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
};

ordered_json meta_to_json(const ModelMeta& arch, const CheckpointMeta& meta) {
  ordered_json j;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["arch"] = arch.arch;
  j["stage_blocks"] = arch.stage_blocks;
  j["base_channels"] = arch.base_channels;
  j["input_h"] = arch.input_h;
  j["input_w"] = arch.input_w;
  j["in_channels"] = arch.in_channels;
  j["num_classes"] = arch.num_classes;
  j["stem"] = arch.stem;
  if (!meta.whiten_mean.empty()) {
    j["whiten_mean"] = meta.whiten_mean;
    j["whiten_std"] = meta.whiten_std;
  }
  return j;
}

}  // namespace

void save_checkpoint(const ModelGraph& model, const std::string& path,
                     const CheckpointMeta& meta, const std::map<std::string, NamedTensor>& extra) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint '" + path + "'");

  std::uint32_t count = 0;
  visit_params(model, [&](const std::string&, const std::vector<std::uint32_t>&, const float*,
                          std::size_t) { ++count; });
  count += static_cast<std::uint32_t>(extra.size());

  os.write("NSCK", 4);
  put_u32(os, 1);
  put_u32(os, count);

  auto put_tensor = [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                        const float* data, std::size_t n) {
    if (name.size() > 0xFFFF) throw DataError("tensor name too long: " + name);
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(dims.size()));
    for (std::uint32_t d : dims) put_u32(os, d);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  };
  visit_params(model, put_tensor);
  for (const auto& [name, t] : extra) put_tensor(name, t.dims, t.data.data(), t.data.size());

  const std::string meta_text = meta_to_json(model.meta, meta).dump();
  put_u32(os, static_cast<std::uint32_t>(meta_text.size()));
  os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  if (!os) throw DataError("write failure on checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "NSCK", 4) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "'" + path + "' is not a netscope checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");

  std::map<std::string, NamedTensor> tensors;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "tensor name");
    std::uint8_t ndim;
    r.bytes(&ndim, 1, "tensor rank");
    NamedTensor t;
    std::uint64_t total = 1;
    for (int d = 0; d < ndim; ++d) {
      t.dims.push_back(r.u32("tensor dims"));
      total *= t.dims.back();
    }
    t.data.resize(total);
    r.bytes(t.data.data(), total * sizeof(float), ("payload of " + name).c_str());
    order.push_back(name);
    tensors.emplace(std::move(name), std::move(t));
  }
  const std::uint32_t meta_len = r.u32("metadata length");
  std::string meta_text(meta_len, '\0');
  r.bytes(meta_text.data(), meta_len, "metadata");

  ordered_json j;
  try {
    j = ordered_json::parse(meta_text);
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  ModelMeta arch;
  LoadedCheckpoint out;
  try {
    out.meta.epoch = j.at("epoch").get<int>();
    out.meta.seed = j.at("seed").get<std::uint64_t>();
    out.meta.config_hash = j.at("config_hash").get<std::string>();
    arch.arch = j.at("arch").get<std::string>();
    arch.stage_blocks = j.at("stage_blocks").get<std::vector<int>>();
    arch.base_channels = j.at("base_channels").get<int>();
    arch.input_h = j.at("input_h").get<int>();
    arch.input_w = j.at("input_w").get<int>();
    arch.in_channels = j.at("in_channels").get<int>();
    arch.num_classes = j.at("num_classes").get<int>();
    arch.stem = j.at("stem").get<std::string>();
    if (j.count("whiten_mean")) {
      out.meta.whiten_mean = j.at("whiten_mean").get<std::vector<float>>();
      out.meta.whiten_std = j.at("whiten_std").get<std::vector<float>>();
    }
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("checkpoint metadata incomplete: ") + e.what());
  }

  out.model = build_model<float>(arch, 0);
  visit_params(out.model, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                              float* data, std::size_t n) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint is missing parameter '" + name + "'");
    if (it->second.dims != dims || it->second.data.size() != n)
      throw DataError("checkpoint parameter '" + name + "' has unexpected dims");
    std::memcpy(data, it->second.data.data(), n * sizeof(float));
    tensors.erase(it);
  });
  out.extra = std::move(tensors);
  return out;
}

void export_manifest_blob(const ModelGraph& model, const std::string& manifest_path,
                          const std::string& blob_path) {
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw DataError("cannot write blob '" + blob_path + "'");
  ordered_json entries = ordered_json::array();
  std::uint64_t offset = 0;
  visit_params(model, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                          const float* data, std::size_t n) {
    ordered_json e;
    e["name"] = name;
    e["dims"] = dims;
    e["offset"] = offset;
    entries.push_back(std::move(e));
    blob.write(reinterpret_cast<const char*>(data),
               static_cast<std::streamsize>(n * sizeof(float)));
    offset += n * sizeof(float);
  });
  if (!blob) throw DataError("write failure on blob '" + blob_path + "'");

  ordered_json manifest;
  manifest["format"] = "netscope-weights";
  manifest["tensors"] = std::move(entries);
  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest '" + manifest_path + "'");
  mf << manifest.dump(2) << "\n";
}

void import_manifest_blob(ModelGraph& model, const std::string& manifest_path,
                          const std::string& blob_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw DataError("cannot open manifest '" + manifest_path + "'");
  ordered_json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  struct Entry {
    std::vector<std::uint32_t> dims;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> entries;
  try {
    for (const auto& e : manifest.at("tensors")) {
      entries[e.at("name").get<std::string>()] = {
          e.at("dims").get<std::vector<std::uint32_t>>(), e.at("offset").get<std::uint64_t>()};
    }
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("manifest entries malformed: ") + e.what());
  }

  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot open blob '" + blob_path + "'");
  visit_params(model, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                          float* data, std::size_t n) {
    auto it = entries.find(name);
    if (it == entries.end()) throw DataError("manifest is missing parameter '" + name + "'");
    if (it->second.dims != dims)
      throw DataError("manifest parameter '" + name + "' has unexpected dims");
    blob.seekg(static_cast<std::streamoff>(it->second.offset));
    blob.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(blob.gcount()) != n * sizeof(float))
      throw DataError("blob truncated while reading '" + name + "'");
  });
}

}  // namespace netscope

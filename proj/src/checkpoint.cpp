#include "blockcs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace blockcs {

namespace {

constexpr char kMagic[4] = {'B', 'C', 'S', '1'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("checkpoint: " + msg); }

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

void put_f32_array(std::string& out, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    const size_t old = out.size();
    out.resize(old + v.size() * 4);
    std::memcpy(out.data() + old, v.data(), v.size() * 4);
  } else {
    for (float f : v) {
      uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      put_u32(out, bits);
    }
  }
}

std::string u64_blob(uint64_t v) {
  std::string out;
  put_u64(out, v);
  return out;
}

// Bounds-checked little-endian reader over the whole file image.
struct Reader {
  const std::string& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    if (bytes.size() - pos < n) fail(std::string("truncated while reading ") + what);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 2;
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 4;
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }
  uint64_t u64(const char* what) {
    const uint64_t lo = u32(what);
    const uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  double f64(const char* what) {
    const uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string serialize(const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(ckpt.config.block));
  put_u32(out, static_cast<uint32_t>(ckpt.config.measurements()));
  put_u32(out, static_cast<uint32_t>(ckpt.config.channels));
  put_u32(out, static_cast<uint32_t>(ckpt.config.res_blocks));
  put_f64(out, ckpt.config.rate);

  put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.append(name);
    out.push_back(4);  // ndim
    for (int64_t d : tensor.shape) put_u32(out, static_cast<uint32_t>(d));
    put_f32_array(out, tensor.data);
  }

  const std::vector<std::pair<std::string, std::string>> blobs = {
      {"method", ckpt.method},
      {"seed", u64_blob(ckpt.seed)},
      {"epoch", u64_blob(static_cast<uint64_t>(ckpt.epoch))},
      {"step", u64_blob(static_cast<uint64_t>(ckpt.step))},
      {"adam.t", u64_blob(static_cast<uint64_t>(ckpt.adam_t))},
  };
  put_u32(out, static_cast<uint32_t>(blobs.size()));
  for (const auto& [name, payload] : blobs) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.append(name);
    put_u64(out, payload.size());
    out.append(payload);
  }
  return out;
}

uint64_t blob_u64(const std::string& payload, const std::string& name) {
  if (payload.size() != 8) fail("blob '" + name + "' should hold 8 bytes");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(payload[static_cast<size_t>(i)]);
  return v;
}

Checkpoint parse(const std::string& bytes) {
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail("bad magic (not a checkpoint file)");
  r.pos = 4;
  const uint32_t version = r.u32("version");
  if (version != kVersion) {
    std::ostringstream os;
    os << "unsupported version " << version << " (expected " << kVersion << ")";
    fail(os.str());
  }

  Checkpoint ckpt;
  ckpt.config.block = r.u32("block size");
  const uint32_t stored_m = r.u32("measurement count");
  ckpt.config.channels = r.u32("channel count");
  ckpt.config.res_blocks = r.u32("residual block count");
  ckpt.config.rate = r.f64("measurement rate");
  ckpt.config.validate();
  if (static_cast<int64_t>(stored_m) != ckpt.config.measurements()) {
    std::ostringstream os;
    os << "measurement count " << stored_m << " violates the rate law (rate " << ckpt.config.rate
       << ", block " << ckpt.config.block << " requires " << ckpt.config.measurements() << ")";
    fail(os.str());
  }

  const uint32_t tensor_count = r.u32("tensor count");
  ckpt.tensors.reserve(tensor_count);
  for (uint32_t i = 0; i < tensor_count; ++i) {
    const uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const uint8_t ndim = r.u8("tensor rank");
    if (ndim != 4) {
      std::ostringstream os;
      os << "tensor '" << name << "' has rank " << int(ndim) << ", expected 4";
      fail(os.str());
    }
    int64_t dims[4];
    for (auto& d : dims) d = r.u32("tensor dims");
    Tensor<float> t(dims[0], dims[1], dims[2], dims[3]);
    const size_t nbytes = t.data.size() * 4;
    r.need(nbytes, ("tensor data for '" + name + "'").c_str());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(t.data.data(), bytes.data() + r.pos, nbytes);
      r.pos += nbytes;
    } else {
      for (auto& f : t.data) {
        const uint32_t bits = r.u32("tensor data");
        std::memcpy(&f, &bits, sizeof(f));
      }
    }
    ckpt.tensors.emplace_back(name, std::move(t));
  }

  const uint32_t blob_count = r.u32("blob count");
  bool saw_method = false, saw_seed = false, saw_epoch = false, saw_step = false, saw_t = false;
  for (uint32_t i = 0; i < blob_count; ++i) {
    const uint16_t name_len = r.u16("blob name length");
    const std::string name = r.str(name_len, "blob name");
    const uint64_t len = r.u64("blob length");
    const std::string payload = r.str(len, ("blob '" + name + "'").c_str());
    if (name == "method") {
      ckpt.method = payload;
      saw_method = true;
    } else if (name == "seed") {
      ckpt.seed = blob_u64(payload, name);
      saw_seed = true;
    } else if (name == "epoch") {
      ckpt.epoch = static_cast<int64_t>(blob_u64(payload, name));
      saw_epoch = true;
    } else if (name == "step") {
      ckpt.step = static_cast<int64_t>(blob_u64(payload, name));
      saw_step = true;
    } else if (name == "adam.t") {
      ckpt.adam_t = static_cast<int64_t>(blob_u64(payload, name));
      saw_t = true;
    } else {
      fail("unknown blob '" + name + "'");
    }
  }
  if (!saw_method) fail("missing blob 'method'");
  if (!saw_seed) fail("missing blob 'seed'");
  if (!saw_epoch) fail("missing blob 'epoch'");
  if (!saw_step) fail("missing blob 'step'");
  if (!saw_t) fail("missing blob 'adam.t'");
  if (ckpt.method != "full" && ckpt.method != "baseline") {
    fail("blob 'method' holds '" + ckpt.method + "', expected 'full' or 'baseline'");
  }
  if (r.pos != bytes.size()) fail("trailing bytes after the blob table");
  return ckpt;
}

template <typename Model>
Checkpoint make_checkpoint_impl(const Model& model, const char* method,
                                const AdamState<float>& adam, uint64_t seed, int64_t epoch,
                                int64_t step) {
  Checkpoint ckpt;
  ckpt.config = model.config;
  ckpt.method = method;
  ckpt.seed = seed;
  ckpt.epoch = epoch;
  ckpt.step = step;
  ckpt.adam_t = adam.t;
  const auto params = model.params();
  if (adam.m.size() != params.size() || adam.v.size() != params.size()) {
    fail("optimizer state does not cover the parameter list");
  }
  ckpt.tensors.reserve(3 * params.size());
  for (const auto& [name, p] : params) ckpt.tensors.emplace_back(name, *p);
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + params[i].first, adam.m[i]);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam.v." + params[i].first, adam.v[i]);
  }
  return ckpt;
}

template <typename Model>
void restore_params(Model& model, const Checkpoint& ckpt, AdamState<float>* adam) {
  std::unordered_map<std::string, const Tensor<float>*> table;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!table.emplace(name, &t).second) fail("duplicate tensor '" + name + "'");
  }
  auto take = [&](const std::string& name, Tensor<float>& dst) {
    auto it = table.find(name);
    if (it == table.end()) fail("missing tensor '" + name + "'");
    if (it->second->shape != dst.shape) {
      std::ostringstream os;
      os << "tensor '" << name << "' shaped " << shape_string(it->second->shape)
         << ", config requires " << shape_string(dst.shape);
      fail(os.str());
    }
    dst = *it->second;
    table.erase(it);
  };

  auto params = model.params();
  if (adam) {
    *adam = AdamState<float>{};
    adam->t = ckpt.adam_t;
    adam->m.resize(params.size());
    adam->v.resize(params.size());
  }
  for (size_t i = 0; i < params.size(); ++i) {
    take(params[i].first, *params[i].second);
    if (adam) {
      adam->m[i] = Tensor<float>::zeros_like(*params[i].second);
      adam->v[i] = Tensor<float>::zeros_like(*params[i].second);
      take("adam.m." + params[i].first, adam->m[i]);
      take("adam.v." + params[i].first, adam->v[i]);
    }
  }
  if (adam && !table.empty()) {
    fail("unexpected tensor '" + table.begin()->first + "'");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Checkpoint make_checkpoint(const FullModel<float>& model, const AdamState<float>& adam,
                           uint64_t seed, int64_t epoch, int64_t step) {
  return make_checkpoint_impl(model, "full", adam, seed, epoch, step);
}

Checkpoint make_checkpoint(const BaselineModel<float>& model, const AdamState<float>& adam,
                           uint64_t seed, int64_t epoch, int64_t step) {
  return make_checkpoint_impl(model, "baseline", adam, seed, epoch, step);
}

FullModel<float> full_from_checkpoint(const Checkpoint& ckpt, AdamState<float>* adam) {
  if (ckpt.method != "full") fail("method is '" + ckpt.method + "', expected 'full'");
  FullModel<float> model = init_full_model<float>(ckpt.config, 0);
  restore_params(model, ckpt, adam);
  return model;
}

BaselineModel<float> baseline_from_checkpoint(const Checkpoint& ckpt, AdamState<float>* adam) {
  if (ckpt.method != "baseline") fail("method is '" + ckpt.method + "', expected 'baseline'");
  BaselineModel<float> model = init_baseline_model<float>(ckpt.config, 0);
  restore_params(model, ckpt, adam);
  return model;
}

}  // namespace blockcs

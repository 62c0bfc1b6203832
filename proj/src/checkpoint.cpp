#include <cstring>
#include <fstream>
#include <sstream>

#include "stemgnn/errors.hpp"
#include "stemgnn/trainer.hpp"

namespace stemgnn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'M', 'G', 'N', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

// little-endian raw writes; the format is defined for little-endian hosts
template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

void put_tensor(std::string& out, const Tensor& t) {
  put<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
  for (int64_t e : t.shape) put<int64_t>(out, e);
  out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw ContractViolation("checkpoint: truncated record");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_str() {
    uint32_t n = get<uint32_t>();
    if (pos + n > buf.size()) throw ContractViolation("checkpoint: truncated string");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  Tensor get_tensor() {
    uint32_t rank = get<uint32_t>();
    std::vector<int64_t> shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(get<int64_t>());
    Tensor t(shape);
    size_t bytes = t.data.size() * sizeof(double);
    if (pos + bytes > buf.size()) throw ContractViolation("checkpoint: truncated payload");
    std::memcpy(t.data.data(), buf.data() + pos, bytes);
    pos += bytes;
    return t;
  }
};

std::string encode_config(const ModelConfig& c) {
  std::ostringstream ss;
  ss.precision(17);
  ss << c.num_layers << " " << c.input_dim << " " << c.hidden_dim << " " << c.num_experts
     << " " << c.tau << " " << c.dropout << " " << (c.batchnorm ? 1 : 0) << " "
     << c.code_dim << " " << c.codebook_size << " " << c.num_classes << " "
     << (c.vq_enabled ? 1 : 0) << " " << c.commitment_beta << " " << c.moe_layers.size();
  for (int l : c.moe_layers) ss << " " << l;
  return ss.str();
}

ModelConfig decode_config(const std::string& s) {
  std::istringstream ss(s);
  ModelConfig c;
  int bn = 1, vq = 1;
  size_t nmoe = 0;
  if (!(ss >> c.num_layers >> c.input_dim >> c.hidden_dim >> c.num_experts >> c.tau >>
        c.dropout >> bn >> c.code_dim >> c.codebook_size >> c.num_classes >> vq >>
        c.commitment_beta >> nmoe))
    throw ContractViolation("checkpoint: malformed model config block");
  c.batchnorm = bn != 0;
  c.vq_enabled = vq != 0;
  for (size_t i = 0; i < nmoe; ++i) {
    int l;
    ss >> l;
    c.moe_layers.push_back(l);
  }
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string payload;
  put<uint32_t>(payload, static_cast<uint32_t>(ck.config_echo.size()));
  for (const auto& [k, v] : ck.config_echo) {
    put_str(payload, k);
    put_str(payload, v);
  }
  put<uint64_t>(payload, ck.rng_seed);
  put<uint64_t>(payload, ck.rng_counter);
  put<int32_t>(payload, ck.epoch);
  put<double>(payload, ck.best_val_metric);
  put<uint8_t>(payload, ck.state.codebook_frozen ? 1 : 0);
  put<uint8_t>(payload, ck.state.codebook_initialized ? 1 : 0);
  put<uint64_t>(payload, ck.state.codebook_hash());
  put_str(payload, encode_config(ck.state.cfg));
  uint32_t count = 0;
  ck.state.visit([&](const std::string&, const Tensor&, ModelState::TensorKind) { ++count; });
  put<uint32_t>(payload, count);
  ck.state.visit([&](const std::string& name, const Tensor& t, ModelState::TensorKind) {
    put_str(payload, name);
    put_tensor(payload, t);
  });

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  uint64_t len = payload.size();
  uint64_t sum = fnv1a64(payload.data(), payload.size());
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic (not a checkpoint file): " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!f || ver != kVersion)
    throw DataError("checkpoint: incompatible format version " + std::to_string(ver) +
                    " (expected " + std::to_string(kVersion) + ")");
  uint64_t len = 0, sum = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  f.read(reinterpret_cast<char*>(&sum), sizeof(sum));
  if (!f) throw ContractViolation("checkpoint: truncated header");
  std::string payload(len, '\0');
  f.read(payload.data(), static_cast<std::streamsize>(len));
  if (!f || static_cast<uint64_t>(f.gcount()) != len)
    throw ContractViolation("checkpoint: payload shorter than declared length");
  if (fnv1a64(payload.data(), payload.size()) != sum)
    throw ContractViolation("checkpoint: checksum mismatch (corrupted payload)");

  Reader r{payload};
  Checkpoint ck;
  ck.version = ver;
  uint32_t n_cfg = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_cfg; ++i) {
    std::string k = r.get_str();
    ck.config_echo[k] = r.get_str();
  }
  ck.rng_seed = r.get<uint64_t>();
  ck.rng_counter = r.get<uint64_t>();
  ck.epoch = r.get<int32_t>();
  ck.best_val_metric = r.get<double>();
  uint8_t frozen = r.get<uint8_t>();
  uint8_t inited = r.get<uint8_t>();
  uint64_t cb_hash = r.get<uint64_t>();
  ModelConfig cfg = decode_config(r.get_str());
  ck.state = init_model(cfg, 0);
  ck.state.codebook_frozen = frozen != 0;
  ck.state.codebook_initialized = inited != 0;
  uint32_t count = r.get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_str();
    Tensor t = r.get_tensor();
    bool found = false;
    ck.state.visit([&](const std::string& pname, Tensor& pt, ModelState::TensorKind) {
      if (pname != name) return;
      if (!pt.same_shape(t))
        throw DataError("checkpoint: tensor " + name + " has shape " + t.shape_str() +
                        ", model expects " + pt.shape_str());
      pt = t;
      found = true;
    });
    if (!found) throw DataError("checkpoint: unknown tensor name " + name);
  }
  if (ck.state.codebook_hash() != cb_hash)
    throw ContractViolation("checkpoint: stored codebook hash does not match contents");
  return ck;
}

}  // namespace stemgnn

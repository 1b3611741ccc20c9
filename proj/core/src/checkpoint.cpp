#include <openssl/evp.h>

#include <array>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "dfn/bytes.hpp"
#include "dfn/config_io.hpp"
#include "dfn/errors.hpp"
#include "dfn/training.hpp"

namespace dfn {
namespace {

constexpr char kMagic[8] = {'D', 'F', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kDigestSize = 32;

enum Dtype : std::uint8_t { kF32 = 0, kU8 = 1, kU64 = 2 };

std::array<std::uint8_t, kDigestSize> sha256(const std::uint8_t* data, std::size_t len) {
  std::array<std::uint8_t, kDigestSize> out{};
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 ||
      out_len != kDigestSize) {
    throw StateError("checkpoint: sha-256 digest failed");
  }
  return out;
}

void put_record_header(std::vector<std::uint8_t>& out, const std::string& name,
                       std::uint8_t dtype, const std::vector<std::uint32_t>& dims) {
  if (name.size() > 0xFFFF) throw StateError("checkpoint: record name too long: " + name);
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(dtype);
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (std::uint32_t d : dims) put_u32(out, d);
}

void put_f32_record(std::vector<std::uint8_t>& out, const std::string& name,
                    const Shape& shape, const std::vector<float>& values) {
  std::vector<std::uint32_t> dims;
  std::size_t count = 1;
  for (int d : shape) {
    dims.push_back(static_cast<std::uint32_t>(d));
    count *= static_cast<std::size_t>(d);
  }
  if (count != values.size())
    throw StateError("checkpoint: shape/data mismatch for " + name);
  put_record_header(out, name, kF32, dims);
  for (float v : values) put_f32(out, v);
}

void put_u8_record(std::vector<std::uint8_t>& out, const std::string& name,
                   const std::string& text) {
  put_record_header(out, name, kU8, {static_cast<std::uint32_t>(text.size())});
  out.insert(out.end(), text.begin(), text.end());
}

void put_u64_record(std::vector<std::uint8_t>& out, const std::string& name,
                    std::uint64_t value) {
  put_record_header(out, name, kU64, {1});
  put_u64(out, value);
}

struct Record {
  std::uint8_t dtype = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

std::size_t dtype_size(std::uint8_t dtype, const std::string& name) {
  switch (dtype) {
    case kF32: return 4;
    case kU8: return 1;
    case kU64: return 8;
    default: throw IoError("checkpoint: unknown dtype for record " + name);
  }
}

std::map<std::string, Record> parse_records(ByteReader& r) {
  std::map<std::string, Record> records;
  while (r.remaining() > 0) {
    std::uint16_t name_len = r.u16();
    std::string name(reinterpret_cast<const char*>(r.take(name_len)), name_len);
    Record rec;
    rec.dtype = r.u8();
    std::uint8_t rank = r.u8();
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
      rec.dims.push_back(r.u32());
      count *= rec.dims.back();
    }
    std::size_t bytes = count * dtype_size(rec.dtype, name);
    const std::uint8_t* p = r.take(bytes);
    rec.payload.assign(p, p + bytes);
    if (!records.emplace(name, std::move(rec)).second)
      throw IoError("checkpoint: duplicate record " + name);
  }
  return records;
}

std::vector<float> record_floats(const Record& rec, const std::string& name) {
  if (rec.dtype != kF32) throw IoError("checkpoint: record " + name + " is not f32");
  std::vector<float> out(rec.payload.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, rec.payload.data() + 4 * i, 4);
    float v;
    std::memcpy(&v, &bits, 4);
    out[i] = v;
  }
  return out;
}

std::string record_text(const Record& rec, const std::string& name) {
  if (rec.dtype != kU8) throw IoError("checkpoint: record " + name + " is not u8");
  return std::string(rec.payload.begin(), rec.payload.end());
}

std::uint64_t record_u64(const Record& rec, const std::string& name) {
  if (rec.dtype != kU64 || rec.payload.size() != 8)
    throw IoError("checkpoint: record " + name + " is not a u64 scalar");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | rec.payload[static_cast<std::size_t>(i)];
  return v;
}

const Record& require(const std::map<std::string, Record>& records, const std::string& name) {
  auto it = records.find(name);
  if (it == records.end()) throw IoError("checkpoint: missing record " + name);
  return it->second;
}

void check_dims(const Record& rec, const Shape& shape, const std::string& name) {
  bool ok = rec.dims.size() == shape.size();
  for (std::size_t i = 0; ok && i < shape.size(); ++i)
    ok = rec.dims[i] == static_cast<std::uint32_t>(shape[i]);
  if (!ok) throw IoError("checkpoint: shape mismatch for " + name);
}

}  // namespace

void save_checkpoint(const std::string& path, const DeFraudNetModel& model,
                     const SgdNesterov& opt, std::uint64_t epoch, const Rng& rng,
                     const std::string& config_json) {
  std::vector<std::uint8_t> payload;
  put_u8_record(payload, "config/json", config_json);
  put_u64_record(payload, "meta/epoch", epoch);
  put_u64_record(payload, "meta/init_seed", model.init_seed);
  put_u8_record(payload, "rng/state", rng.serialize());
  for (const auto& [name, t] : model.params.params())
    put_f32_record(payload, "param/" + name, t->shape, t->data);
  for (const auto& [name, t] : model.params.buffers())
    put_f32_record(payload, "buffer/" + name, t->shape, t->data);
  for (const auto& [name, v] : opt.velocities())
    put_f32_record(payload, "vel/" + name, Shape{static_cast<int>(v.size())}, v);

  std::vector<std::uint8_t> blob;
  blob.reserve(8 + 4 + 8 + payload.size() + kDigestSize);
  blob.insert(blob.end(), kMagic, kMagic + 8);
  put_u32(blob, kVersion);
  put_u64(blob, payload.size());
  blob.insert(blob.end(), payload.begin(), payload.end());
  auto digest = sha256(blob.data(), blob.size());
  blob.insert(blob.end(), digest.begin(), digest.end());
  write_binary_file(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<std::uint8_t> blob = read_binary_file(path);
  if (blob.size() < 8 + 4 + 8 + kDigestSize)
    throw IoError("checkpoint: " + path + " is too short to be a checkpoint");
  if (std::memcmp(blob.data(), kMagic, 8) != 0)
    throw IoError("checkpoint: " + path + " has wrong magic");

  ByteReader header(blob.data() + 8, blob.size() - 8 - kDigestSize, path);
  std::uint32_t version = header.u32();
  if (version != kVersion)
    throw IoError("checkpoint: " + path + " has unsupported version " + std::to_string(version));
  std::uint64_t payload_len = header.u64();
  if (payload_len != blob.size() - 8 - 4 - 8 - kDigestSize)
    throw IoError("checkpoint: " + path + " payload length does not match file size");

  auto digest = sha256(blob.data(), blob.size() - kDigestSize);
  if (std::memcmp(digest.data(), blob.data() + blob.size() - kDigestSize, kDigestSize) != 0)
    throw IoError("checkpoint: " + path + " checksum mismatch (file is corrupt)");

  ByteReader body(blob.data() + 8 + 4 + 8, payload_len, path);
  std::map<std::string, Record> records = parse_records(body);

  Checkpoint ck;
  ck.config_json = record_text(require(records, "config/json"), "config/json");
  ck.epoch = record_u64(require(records, "meta/epoch"), "meta/epoch");
  std::uint64_t init_seed = record_u64(require(records, "meta/init_seed"), "meta/init_seed");
  ck.rng = Rng::deserialize(record_text(require(records, "rng/state"), "rng/state"));

  PipelineConfig pipeline = config_from_json(ck.config_json);
  ck.model = build_model<float>(pipeline.model, init_seed);

  for (const auto& [name, t] : ck.model.params.params()) {
    const Record& rec = require(records, "param/" + name);
    check_dims(rec, t->shape, "param/" + name);
    t->data = record_floats(rec, "param/" + name);
  }
  for (const auto& [name, t] : ck.model.params.buffers()) {
    const Record& rec = require(records, "buffer/" + name);
    check_dims(rec, t->shape, "buffer/" + name);
    t->data = record_floats(rec, "buffer/" + name);
  }
  for (const auto& [name, rec] : records) {
    if (name.rfind("vel/", 0) != 0) continue;
    std::string pname = name.substr(4);
    if (!ck.model.params.has_param(pname))
      throw IoError("checkpoint: velocity for unknown parameter " + pname);
    ck.velocities[pname] = record_floats(rec, name);
  }
  return ck;
}

}  // namespace dfn

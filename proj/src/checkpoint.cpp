#include "dstf/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <unordered_map>

#include "dstf/errors.hpp"
#include "dstf/rng.hpp"

namespace dstf {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'T', 'F'};

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw DataError(std::string("checkpoint: truncated while reading ") + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
  return value;
}

std::string get_bytes(std::istream& is, std::size_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw DataError(std::string("checkpoint: truncated while reading ") + what);
  }
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& os, const CheckpointData& ckpt) {
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  const std::string blob = ckpt.meta.dump();
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(blob.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF) throw UsageError("checkpoint: tensor name too long: " + t.name);
    if (t.shape.size() > 0xFF) throw UsageError("checkpoint: rank too large for " + t.name);
    if (shape_numel(t.shape) != t.data.size()) throw DimensionError("checkpoint: payload/shape mismatch for " + t.name);
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : t.data) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw DataError("checkpoint: write failed");
}

CheckpointData read_checkpoint(std::istream& is) {
  const std::string magic = get_bytes(is, 4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic bytes (not a DSTF file)");
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointData ckpt;
  const auto blob_len = get_le<std::uint32_t>(is, "config length");
  const std::string blob = get_bytes(is, blob_len, "config");
  try {
    ckpt.meta = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed config JSON: ") + e.what());
  }
  const auto count = get_le<std::uint32_t>(is, "tensor count");
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = get_le<std::uint16_t>(is, "tensor name length");
    t.name = get_bytes(is, name_len, "tensor name");
    const auto rank = get_le<std::uint8_t>(is, "tensor rank");
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(get_le<std::uint32_t>(is, "tensor dims"));
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) v = std::bit_cast<float>(get_le<std::uint32_t>(is, "tensor payload"));
    ckpt.tensors.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes after last tensor");
  return ckpt;
}

template <typename Real>
CheckpointData make_checkpoint(const DualStreamModel<Real>& model, const nlohmann::json& extra) {
  CheckpointData ckpt;
  ckpt.meta = extra.is_object() ? extra : nlohmann::json::object();
  ckpt.meta["model"] = model.config().to_json();
  for (const auto& p : model.parameters()) {
    const auto d = p.tensor.data();
    StoredTensor t{p.name, p.tensor.shape(), std::vector<float>(d.size())};
    for (std::size_t i = 0; i < d.size(); ++i) t.data[i] = static_cast<float>(d[i]);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

template <typename Real>
DualStreamModel<Real> model_from_checkpoint(const CheckpointData& ckpt) {
  if (!ckpt.meta.contains("model")) throw DataError("checkpoint: missing model config");
  DualStreamModel<Real> model(ModelConfig::from_json(ckpt.meta.at("model")));
  std::unordered_map<std::string, const StoredTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint: holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint: missing tensor " + p.name);
    if (it->second->shape != p.tensor.shape()) {
      throw DataError("checkpoint: tensor " + p.name + " has shape " + shape_to_string(it->second->shape) +
                      ", expected " + shape_to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    const auto& src = it->second->data;
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Real>(src[i]);
  }
  return model;
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const DualStreamModel<Real>& model,
                     const nlohmann::json& extra) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(os, make_checkpoint(model, extra));
  os.flush();
  if (!os) throw DataError("checkpoint: write to " + path.string() + " failed");
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::uint64_t h = fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template CheckpointData make_checkpoint(const DualStreamModel<float>&, const nlohmann::json&);
template CheckpointData make_checkpoint(const DualStreamModel<double>&, const nlohmann::json&);
template DualStreamModel<float> model_from_checkpoint(const CheckpointData&);
template DualStreamModel<double> model_from_checkpoint(const CheckpointData&);
template void save_checkpoint(const std::filesystem::path&, const DualStreamModel<float>&, const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const DualStreamModel<double>&, const nlohmann::json&);

}  // namespace dstf

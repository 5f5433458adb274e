#pragma once

// Binary checkpoint container:
//   "LPCK" | u32 version | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | u32 dims[rank] | f32 payload
//   u32 trailer length | JSON trailer
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lp/error.hpp"
#include "lp/model.hpp"
#include "lp/nn/adam.hpp"

namespace lp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Mat<float> data;
};

struct CheckpointData {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const nn::Mat<float>* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t.data;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const CheckpointData& data) {
  std::string out = "LPCK";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& t : data.tensors) {
    if (t.name.size() > 0xffff) throw ShapeError("tensor name too long: " + t.name);
    detail::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    detail::put_u8(out, 2);
    detail::put_u32(out, static_cast<std::uint32_t>(t.data.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.data.cols()));
    for (Eigen::Index i = 0; i < t.data.size(); ++i) detail::put_u32(out, std::bit_cast<std::uint32_t>(t.data.data()[i]));
  }
  const std::string trailer = data.meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(trailer.size()));
  out += trailer;
  return out;
}

inline CheckpointData parse_checkpoint(const std::string& bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < 4 || in.take(4) != "LPCK") throw CorruptionError("not a checkpoint (bad magic)");
  const auto version = static_cast<std::uint32_t>(in.uint(4));
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  CheckpointData data;
  const auto count = in.uint(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = in.take(static_cast<std::size_t>(in.uint(2)));
    const auto rank = in.uint(1);
    if (rank > 2) throw CorruptionError("tensor " + t.name + " has rank " + std::to_string(rank));
    std::uint64_t dims[2] = {1, 1};
    for (std::uint64_t r = 0; r < rank; ++r) dims[2 - rank + r] = in.uint(4);
    t.data.resize(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(in.uint(4)));
    data.tensors.push_back(std::move(t));
  }
  const std::string trailer = in.take(static_cast<std::size_t>(in.uint(4)));
  if (!in.done()) throw CorruptionError("trailing bytes after checkpoint trailer");
  try {
    data.meta = nlohmann::json::parse(trailer);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint trailer: ") + e.what());
  }
  return data;
}

// Writes to a temporary sibling and renames it over `path`.
inline void write_checkpoint_file(const std::string& path, const CheckpointData& data) {
  const std::string bytes = serialize_checkpoint(data);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

// Model parameters, codebook state, optional optimizer moments and the step.
struct TrainState {
  std::unique_ptr<model::Model<float>> model;
  nn::AdamState<float> adam;
  long step = 0;
};

inline CheckpointData checkpoint_from_state(const TrainState& s, const nlohmann::json& extra = nlohmann::json::object()) {
  CheckpointData data;
  const auto& m = *s.model;
  for (const auto* p : m.params.all()) data.tensors.push_back({p->name, p->data});
  if (!m.cfg.baseline) {
    data.tensors.push_back({"vq.codebook", m.codebook.c});
    data.tensors.push_back({"vq.ema_counts", m.codebook.ema_counts});
    data.tensors.push_back({"vq.ema_sums", m.codebook.ema_sums});
  }
  for (const auto& [name, mat] : s.adam.m) data.tensors.push_back({"adam.m." + name, mat});
  for (const auto& [name, mat] : s.adam.v) data.tensors.push_back({"adam.v." + name, mat});
  data.meta = extra;
  data.meta["model"] = m.cfg;
  data.meta["step"] = s.step;
  data.meta["adam_step"] = s.adam.step;
  return data;
}

inline TrainState state_from_checkpoint(const CheckpointData& data) {
  TrainState s;
  if (!data.meta.contains("model") || !data.meta.contains("step")) throw CorruptionError("checkpoint trailer lacks model/step");
  model::ModelConfig cfg;
  try {
    cfg = model::model_config_from_json(data.meta.at("model"));
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint model config: ") + e.what());
  }
  s.model = std::make_unique<model::Model<float>>(cfg, 0);
  std::size_t used = 0;
  const auto restore = [&](const std::string& name, nn::Mat<float>& dst) {
    const auto* src = data.find(name);
    if (src == nullptr) throw CorruptionError("checkpoint lacks tensor " + name);
    if (src->rows() != dst.rows() || src->cols() != dst.cols()) throw CorruptionError("shape mismatch for " + name);
    dst = *src;
    ++used;
  };
  for (auto* p : s.model->params.all()) restore(p->name, p->data);
  if (!cfg.baseline) {
    restore("vq.codebook", s.model->codebook.c);
    restore("vq.ema_counts", s.model->codebook.ema_counts);
    restore("vq.ema_sums", s.model->codebook.ema_sums);
  }
  for (const auto& t : data.tensors) {
    if (t.name.rfind("adam.m.", 0) == 0) {
      s.adam.m[t.name.substr(7)] = t.data;
      ++used;
    } else if (t.name.rfind("adam.v.", 0) == 0) {
      s.adam.v[t.name.substr(7)] = t.data;
      ++used;
    }
  }
  if (used != data.tensors.size()) throw CorruptionError("checkpoint has unexpected tensors");
  s.step = data.meta.at("step").get<long>();
  s.adam.step = data.meta.value("adam_step", 0L);
  return s;
}

inline void save_checkpoint(const std::string& path, const TrainState& s,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  write_checkpoint_file(path, checkpoint_from_state(s, extra));
}

inline TrainState load_checkpoint(const std::string& path) { return state_from_checkpoint(read_checkpoint_file(path)); }

}  // namespace lp

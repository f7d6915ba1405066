#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "slcd/codec.hpp"
#include "slcd/consistency.hpp"
#include "slcd/denoiser.hpp"
#include "slcd/schedule.hpp"
#include "slcd/segmenter.hpp"
#include "slcd/tensor.hpp"

namespace slcd {

enum class CkptKind : std::uint32_t { codec = 0, teacher = 1, consistency = 2, segmenter = 3 };

inline const char* ckpt_kind_name(CkptKind k) {
  switch (k) {
    case CkptKind::codec: return "codec";
    case CkptKind::teacher: return "teacher";
    case CkptKind::consistency: return "consistency";
    case CkptKind::segmenter: return "segmenter";
  }
  return "?";
}

// Self-describing parameter container: sorted metadata strings plus named
// tensors. Binary layout is little-endian with a trailing FNV-1a digest.
struct Checkpoint {
  CkptKind kind = CkptKind::codec;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    require(it != meta.end(), "checkpoint: missing metadata key '" + key + "'");
    return it->second;
  }
  const Tensor& tensor_at(const std::string& name) const {
    auto it = tensors.find(name);
    require(it != tensors.end(), "checkpoint: missing tensor '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline constexpr std::uint32_t kCkptVersion = 1;

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<std::uint8_t>& b, double v) {
  put_u64(b, std::bit_cast<std::uint64_t>(v));
}
inline void put_str(std::vector<std::uint8_t>& b, const std::string& s) {
  put_u64(b, s.size());
  b.insert(b.end(), s.begin(), s.end());
}

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    require(pos + n <= bytes.size(), "checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint64_t n = u64();
    require(n <= bytes.size() - pos, "checkpoint: truncated string");
    std::string s(bytes.begin() + static_cast<long>(pos),
                  bytes.begin() + static_cast<long>(pos + n));
    pos += n;
    return s;
  }
};

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> b;
  b.push_back('S');
  b.push_back('L');
  b.push_back('C');
  b.push_back('D');
  detail::put_u32(b, detail::kCkptVersion);
  detail::put_u32(b, static_cast<std::uint32_t>(ck.kind));
  detail::put_u64(b, ck.meta.size());
  for (const auto& [k, v] : ck.meta) {
    detail::put_str(b, k);
    detail::put_str(b, v);
  }
  detail::put_u64(b, ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    detail::put_str(b, name);
    detail::put_u64(b, t.shape.size());
    for (std::size_t d : t.shape) detail::put_u64(b, d);
    for (double v : t.data) detail::put_f64(b, v);
  }
  detail::put_u64(b, detail::fnv1a(b.data(), b.size()));
  return b;
}

struct LoadedCheckpoint {
  Checkpoint ck;
  std::uint64_t digest = 0;
};

inline LoadedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 4 + 4 + 4 + 8 + 8 + 8, "checkpoint: file too small");
  require(bytes[0] == 'S' && bytes[1] == 'L' && bytes[2] == 'C' && bytes[3] == 'D',
          "checkpoint: bad magic (not a model checkpoint)");
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]) << (8 * i);
  std::uint64_t digest = detail::fnv1a(bytes.data(), bytes.size() - 8);
  require(digest == stored, "checkpoint: digest mismatch (file corrupted)");

  detail::ByteReader r{bytes};
  r.pos = 4;
  std::uint32_t version = r.u32();
  require(version == detail::kCkptVersion,
          "checkpoint: unsupported version " + std::to_string(version));
  std::uint32_t kind = r.u32();
  require(kind <= 3, "checkpoint: unknown kind tag");

  LoadedCheckpoint out;
  out.digest = digest;
  out.ck.kind = static_cast<CkptKind>(kind);
  std::uint64_t n_meta = r.u64();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    out.ck.meta.emplace(std::move(k), std::move(v));
  }
  std::uint64_t n_tensors = r.u64();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    std::uint64_t rank = r.u64();
    require(rank <= 4, "checkpoint: implausible tensor rank");
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      std::uint64_t dim = r.u64();
      require(dim >= 1 && dim <= (1ULL << 32), "checkpoint: implausible dimension");
      shape.push_back(static_cast<std::size_t>(dim));
      numel *= static_cast<std::size_t>(dim);
    }
    Tensor t(shape);
    for (std::size_t e = 0; e < numel; ++e) t.data[e] = r.f64();
    out.ck.tensors.emplace(std::move(name), std::move(t));
  }
  require(r.pos == bytes.size() - 8, "checkpoint: trailing bytes");
  return out;
}

// Returns the digest so callers can record provenance (distilled models
// store their teacher's digest).
inline std::uint64_t save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::vector<std::uint8_t> bytes = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "save_checkpoint: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  require(f.good(), "save_checkpoint: write failed for " + path);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)]) << (8 * i);
  return stored;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "load_checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

// ---- converters between live structs and checkpoint sections ----

namespace detail {

inline const char* act_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::tanh_: return "tanh";
    case Activation::silu: return "silu";
  }
  return "?";
}

inline Activation act_from(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "tanh") return Activation::tanh_;
  if (s == "silu") return Activation::silu;
  throw Error("checkpoint: unknown activation '" + s + "'");
}

inline void put_mlp(Checkpoint& ck, const std::string& prefix, const MlpParams& p) {
  p.validate();
  std::string acts;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    std::string base = prefix + ".L" + std::to_string(i);
    ck.tensors[base + ".W"] = p.layers[i].W;
    ck.tensors[base + ".b"] = p.layers[i].b;
    if (i) acts += ',';
    acts += act_name(p.layers[i].act);
  }
  ck.meta[prefix + ".acts"] = acts;
}

inline MlpParams get_mlp(const Checkpoint& ck, const std::string& prefix) {
  std::string acts = ck.meta_at(prefix + ".acts");
  MlpParams p;
  std::size_t start = 0, i = 0;
  while (start <= acts.size()) {
    std::size_t comma = acts.find(',', start);
    std::string name = acts.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::string base = prefix + ".L" + std::to_string(i);
    Layer layer;
    layer.W = ck.tensor_at(base + ".W");
    layer.b = ck.tensor_at(base + ".b");
    layer.act = act_from(name);
    p.layers.push_back(std::move(layer));
    if (comma == std::string::npos) break;
    start = comma + 1;
    ++i;
  }
  p.validate();
  return p;
}

inline void put_schedule(Checkpoint& ck, const std::string& prefix, const NoiseSchedule& s) {
  require(s.kind == ScheduleKind::ddpm_linear, "checkpoint: unknown schedule kind");
  ck.meta[prefix + ".kind"] = "ddpm_linear";
  ck.meta[prefix + ".N"] = std::to_string(s.N);
  ck.meta[prefix + ".beta_lo"] = fmt_double(s.beta_lo);
  ck.meta[prefix + ".beta_hi"] = fmt_double(s.beta_hi);
}

inline NoiseSchedule get_schedule(const Checkpoint& ck, const std::string& prefix) {
  require(ck.meta_at(prefix + ".kind") == "ddpm_linear",
          "checkpoint: unknown schedule kind");
  return make_schedule(ScheduleKind::ddpm_linear,
                       static_cast<int>(parse_int(ck.meta_at(prefix + ".N"))),
                       parse_double(ck.meta_at(prefix + ".beta_lo")),
                       parse_double(ck.meta_at(prefix + ".beta_hi")));
}

inline void put_codec(Checkpoint& ck, const std::string& prefix, const Codec& c) {
  c.validate();
  put_mlp(ck, prefix + ".enc", c.encoder);
  put_mlp(ck, prefix + ".dec", c.decoder);
  ck.tensors[prefix + ".latent_mean"] = c.latent_mean;
  ck.tensors[prefix + ".latent_std"] = c.latent_std;
  ck.meta[prefix + ".image_dim"] = std::to_string(c.image_dim);
  ck.meta[prefix + ".latent_dim"] = std::to_string(c.latent_dim);
  ck.meta[prefix + ".holdout_mse"] = fmt_double(c.holdout_mse);
}

inline Codec get_codec(const Checkpoint& ck, const std::string& prefix) {
  Codec c;
  c.encoder = get_mlp(ck, prefix + ".enc");
  c.decoder = get_mlp(ck, prefix + ".dec");
  c.latent_mean = ck.tensor_at(prefix + ".latent_mean");
  c.latent_std = ck.tensor_at(prefix + ".latent_std");
  c.image_dim = static_cast<std::size_t>(parse_int(ck.meta_at(prefix + ".image_dim")));
  c.latent_dim = static_cast<std::size_t>(parse_int(ck.meta_at(prefix + ".latent_dim")));
  c.holdout_mse = parse_double(ck.meta_at(prefix + ".holdout_mse"));
  c.validate();
  return c;
}

inline void put_denoiser(Checkpoint& ck, const std::string& prefix, const DenoiserNet& n) {
  n.validate();
  put_mlp(ck, prefix + ".trunk", n.trunk);
  ck.tensors[prefix + ".label_table"] = n.label_table;
  ck.meta[prefix + ".num_labels"] = std::to_string(n.num_labels);
  ck.meta[prefix + ".latent_dim"] = std::to_string(n.latent_dim);
  ck.meta[prefix + ".omega_conditioned"] = n.omega_conditioned ? "1" : "0";
  ck.meta[prefix + ".hint_dim"] = std::to_string(n.hint_dim);
  ck.meta[prefix + ".hint_scale"] = fmt_double(n.hint_scale);
  ck.meta[prefix + ".has_adapter"] = n.hint_adapter.layers.empty() ? "0" : "1";
  if (!n.hint_adapter.layers.empty()) put_mlp(ck, prefix + ".adapter", n.hint_adapter);
}

inline DenoiserNet get_denoiser(const Checkpoint& ck, const std::string& prefix) {
  DenoiserNet n;
  n.trunk = get_mlp(ck, prefix + ".trunk");
  n.label_table = ck.tensor_at(prefix + ".label_table");
  n.num_labels = static_cast<int>(parse_int(ck.meta_at(prefix + ".num_labels")));
  n.latent_dim = static_cast<std::size_t>(parse_int(ck.meta_at(prefix + ".latent_dim")));
  n.omega_conditioned = ck.meta_at(prefix + ".omega_conditioned") == "1";
  n.hint_dim = static_cast<std::size_t>(parse_int(ck.meta_at(prefix + ".hint_dim")));
  n.hint_scale = parse_double(ck.meta_at(prefix + ".hint_scale"));
  if (ck.meta_at(prefix + ".has_adapter") == "1")
    n.hint_adapter = get_mlp(ck, prefix + ".adapter");
  n.validate();
  return n;
}

}  // namespace detail

// Teacher and consistency checkpoints carry the codec and a target-domain
// color cloud along so translation needs a single --model argument.
struct TeacherBundle {
  DenoiserNet net;
  NoiseSchedule schedule;
  Codec codec;
  Tensor palette;  // [K,3] colors in [0,1] sampled from real training images
};

inline Checkpoint teacher_to_checkpoint(const TeacherBundle& tb,
                                        std::map<std::string, std::string> extra_meta = {}) {
  require(tb.palette.rank() == 2 && tb.palette.cols() == 3,
          "teacher_to_checkpoint: palette must be [K,3]");
  require(!tb.net.omega_conditioned,
          "teacher_to_checkpoint: teacher must not be omega conditioned");
  Checkpoint ck;
  ck.kind = CkptKind::teacher;
  detail::put_denoiser(ck, "net", tb.net);
  detail::put_schedule(ck, "sched", tb.schedule);
  detail::put_codec(ck, "codec", tb.codec);
  ck.tensors["ot.palette"] = tb.palette;
  for (auto& [k, v] : extra_meta) ck.meta[k] = v;
  return ck;
}

inline TeacherBundle teacher_from_checkpoint(const Checkpoint& ck) {
  require(ck.kind == CkptKind::teacher,
          std::string("checkpoint: expected kind teacher, found ") + ckpt_kind_name(ck.kind));
  TeacherBundle tb{detail::get_denoiser(ck, "net"), detail::get_schedule(ck, "sched"),
                   detail::get_codec(ck, "codec"), ck.tensor_at("ot.palette")};
  require(!tb.net.omega_conditioned, "checkpoint: teacher is omega conditioned");
  return tb;
}

struct ConsistencyBundle {
  ConsistencyModel cm;
  Codec codec;
  Tensor palette;
};

inline Checkpoint consistency_to_checkpoint(const ConsistencyBundle& cb,
                                            std::map<std::string, std::string> extra_meta = {}) {
  require(cb.palette.rank() == 2 && cb.palette.cols() == 3,
          "consistency_to_checkpoint: palette must be [K,3]");
  Checkpoint ck;
  ck.kind = CkptKind::consistency;
  detail::put_denoiser(ck, "net", cb.cm.net);
  detail::put_schedule(ck, "sched", cb.cm.schedule);
  detail::put_codec(ck, "codec", cb.codec);
  ck.tensors["ot.palette"] = cb.palette;
  ck.meta["cm.sigma_data"] = fmt_double(cb.cm.sigma_data);
  ck.meta["cm.omega_min"] = fmt_double(cb.cm.omega_min);
  ck.meta["cm.omega_max"] = fmt_double(cb.cm.omega_max);
  ck.meta["cm.teacher_digest"] = std::to_string(cb.cm.teacher_digest);
  for (auto& [k, v] : extra_meta) ck.meta[k] = v;
  return ck;
}

inline ConsistencyBundle consistency_from_checkpoint(const Checkpoint& ck) {
  require(ck.kind == CkptKind::consistency,
          std::string("checkpoint: expected kind consistency, found ") + ckpt_kind_name(ck.kind));
  ConsistencyBundle cb;
  cb.cm.net = detail::get_denoiser(ck, "net");
  require(cb.cm.net.omega_conditioned, "checkpoint: consistency net lacks omega conditioning");
  cb.cm.schedule = detail::get_schedule(ck, "sched");
  cb.cm.sigma_data = parse_double(ck.meta_at("cm.sigma_data"));
  cb.cm.omega_min = parse_double(ck.meta_at("cm.omega_min"));
  cb.cm.omega_max = parse_double(ck.meta_at("cm.omega_max"));
  cb.cm.teacher_digest = parse_u64(ck.meta_at("cm.teacher_digest"));
  cb.codec = detail::get_codec(ck, "codec");
  cb.palette = ck.tensor_at("ot.palette");
  return cb;
}

inline Checkpoint codec_to_checkpoint(const Codec& c,
                                      std::map<std::string, std::string> extra_meta = {}) {
  Checkpoint ck;
  ck.kind = CkptKind::codec;
  detail::put_codec(ck, "codec", c);
  for (auto& [k, v] : extra_meta) ck.meta[k] = v;
  return ck;
}

inline Codec codec_from_checkpoint(const Checkpoint& ck) {
  require(ck.kind == CkptKind::codec,
          std::string("checkpoint: expected kind codec, found ") + ckpt_kind_name(ck.kind));
  return detail::get_codec(ck, "codec");
}

inline Checkpoint segmenter_to_checkpoint(const Segmenter& s,
                                          std::map<std::string, std::string> extra_meta = {}) {
  s.validate();
  Checkpoint ck;
  ck.kind = CkptKind::segmenter;
  detail::put_mlp(ck, "seg.net", s.net);
  ck.tensors["seg.feat_mean"] = s.feat_mean;
  ck.tensors["seg.feat_std"] = s.feat_std;
  ck.meta["seg.num_classes"] = std::to_string(s.num_classes);
  for (auto& [k, v] : extra_meta) ck.meta[k] = v;
  return ck;
}

inline Segmenter segmenter_from_checkpoint(const Checkpoint& ck) {
  require(ck.kind == CkptKind::segmenter,
          std::string("checkpoint: expected kind segmenter, found ") + ckpt_kind_name(ck.kind));
  Segmenter s;
  s.net = detail::get_mlp(ck, "seg.net");
  s.feat_mean = ck.tensor_at("seg.feat_mean");
  s.feat_std = ck.tensor_at("seg.feat_std");
  s.num_classes = static_cast<int>(parse_int(ck.meta_at("seg.num_classes")));
  s.validate();
  return s;
}

}  // namespace slcd

// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/model/digest.hpp"

namespace ctxprompt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::byte> take() { return std::move(out_); }
  const std::vector<std::byte>& bytes() const { return out_; }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::byte>& in, std::size_t end) : in_(in), end_(end) {}
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* dst, std::size_t n) {
    if (pos_ + n > end_) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::byte>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return t;
  throw ParseError("checkpoint has no blob named '" + name + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ParseError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.pod(kCheckpointVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint metadata entry '" + k + "' contains a reserved character");
    }
    meta += k + "=" + v + "\n";
  }
  w.pod(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta.data(), meta.size());
  w.pod(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, t] : ckpt.blobs) {
    w.pod(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.pod(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.pod(static_cast<std::uint64_t>(d));
    w.pod(static_cast<std::uint64_t>(t.numel()));
    for (Real v : t.data()) w.pod(static_cast<double>(v));
  }
  Fnv1a h;
  h.update(std::span<const std::byte>(w.bytes()));
  w.pod(h.digest());
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::byte>& bytes) {
  if (bytes.size() < 4 + 4 + 4 + 4 + 8) throw ParseError("checkpoint too short");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  Fnv1a h;
  h.update(std::span<const std::byte>(bytes.data(), body));
  if (h.digest() != stored) throw ParseError("checkpoint digest mismatch (file corrupted)");

  Reader r(bytes, body);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::string meta = r.str(r.pod<std::uint32_t>());
  std::size_t start = 0;
  while (start < meta.size()) {
    const auto nl = meta.find('\n', start);
    const std::string line = meta.substr(start, nl - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("malformed checkpoint metadata line: " + line);
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
    start = nl == std::string::npos ? meta.size() : nl + 1;
  }
  const auto n_blobs = r.pod<std::uint32_t>();
  for (std::uint32_t b = 0; b < n_blobs; ++b) {
    std::string name = r.str(r.pod<std::uint32_t>());
    const auto rank = r.pod<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    const auto count = r.pod<std::uint64_t>();
    if (count != shape_numel(shape)) throw ParseError("checkpoint blob '" + name + "' count/shape mismatch");
    std::vector<Real> data(count);
    for (auto& v : data) v = static_cast<Real>(r.pod<double>());
    ckpt.blobs.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (r.pos() != body) throw ParseError("trailing bytes in checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return decode_checkpoint(bytes);
}

void load_params(const Checkpoint& ckpt, const ParamSet& params, const std::string& prefix) {
  for (const auto& [name, t] : params.entries()) {
    const Tensor& src = ckpt.blob(prefix + name);
    if (src.shape() != t.shape()) {
      throw DimensionError("checkpoint blob '" + prefix + name + "' has shape " + shape_str(src.shape()) +
                           ", expected " + shape_str(t.shape()));
    }
    Tensor dst = t;
    auto out = dst.mutable_data();
    std::copy(src.data().begin(), src.data().end(), out.begin());
  }
}

void save_backbone(const std::filesystem::path& path, const Backbone& backbone,
                   std::map<std::string, std::string> extra_meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(extra_meta);
  for (const auto& [k, v] : backbone.config.to_kv()) ckpt.meta[k] = v;
  ckpt.meta.try_emplace("kind", "backbone");
  ckpt.meta["backbone_checksum"] = checksum_hex(checksum(backbone));
  for (const auto& [name, t] : backbone.parameters().entries()) ckpt.blobs.emplace_back(name, t);
  write_checkpoint(path, ckpt);
}

Backbone backbone_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  const ModelConfig cfg = ModelConfig::from_kv(ckpt.meta);
  Backbone b = Backbone::init(cfg, 0);
  load_params(ckpt, b.parameters(), prefix);
  return b;
}

Backbone load_backbone(const std::filesystem::path& path) { return backbone_from_checkpoint(read_checkpoint(path)); }

}  // namespace ctxprompt

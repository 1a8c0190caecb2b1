// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <set>
#include <system_error>

#include "arcl/errors.hpp"

namespace arcl {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'A', 'R', 'C', 'L'};
constexpr std::uint32_t kMaxNameLength = 1u << 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }

  double f64() {
    auto s = take(8, "tensor payload");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[static_cast<std::size_t>(i)]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return &m;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  out.push_back(ckpt.fused ? 1 : 0);
  out.insert(out.end(), ckpt.config_digest.begin(), ckpt.config_digest.end());
  for (const auto& [name, m] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) put_f64(out, v);
  }
  return out;
}

Checkpoint decode(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(kMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw FormatError("not a checkpoint: bad magic", 0);
  }
  const std::size_t version_at = in.offset();
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  Checkpoint ckpt;
  const std::size_t flag_at = in.offset();
  const std::uint8_t flag = in.take(1, "fused flag")[0];
  if (flag > 1) throw FormatError("fused flag must be 0 or 1", flag_at);
  ckpt.fused = flag == 1;
  auto digest = in.take(ckpt.config_digest.size(), "config digest");
  std::copy(digest.begin(), digest.end(), ckpt.config_digest.begin());

  std::set<std::string> seen;
  while (!in.done()) {
    const std::size_t entry_at = in.offset();
    const std::uint32_t name_len = in.u32("tensor name length");
    if (name_len == 0 || name_len > kMaxNameLength) {
      throw FormatError("implausible tensor name length " + std::to_string(name_len), entry_at);
    }
    auto raw = in.take(name_len, "tensor name");
    std::string name(raw.begin(), raw.end());
    if (!seen.insert(name).second) {
      throw FormatError("duplicate tensor '" + name + "'", entry_at);
    }
    const std::size_t ndim_at = in.offset();
    const std::uint32_t ndim = in.u32("ndim");
    if (ndim != 1 && ndim != 2) {
      throw FormatError("tensor '" + name + "' has unsupported ndim " + std::to_string(ndim),
                        ndim_at);
    }
    std::size_t rows = 1;
    const std::size_t cols_or_n = in.u32("dims");
    std::size_t cols = cols_or_n;
    if (ndim == 2) {
      rows = cols_or_n;
      cols = in.u32("dims");
    }
    if (cols != 0 && rows > in.remaining() / 8 / cols) {
      throw FormatError("checkpoint truncated inside payload of '" + name + "'", in.offset());
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) v = in.f64();
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode(bytes);
}

Checkpoint make_checkpoint(const BackboneWeights& weights, const AdapterBank* bank,
                           const Digest& config_digest) {
  Checkpoint ckpt;
  ckpt.config_digest = config_digest;
  for (const auto& [name, m] : weights.named_tensors()) ckpt.tensors.emplace_back(name, *m);
  if (bank != nullptr) {
    for (const auto& [name, m] : bank->tensors()) ckpt.tensors.emplace_back(name, m);
  }
  return ckpt;
}

Checkpoint make_fused_checkpoint(const FusedWeights& fused, const Digest& config_digest) {
  Checkpoint ckpt = make_checkpoint(fused.weights, nullptr, config_digest);
  ckpt.fused = true;
  return ckpt;
}

Matrix LoadedModel::forward(const Image& image) const {
  return vit::forward(image, weights, bank ? &*bank : nullptr, Mode::eval);
}

Matrix LoadedModel::forward_batch(std::span<const Image> images) const {
  return vit::forward_batch(images, weights, bank ? &*bank : nullptr, Mode::eval);
}

LoadedModel restore(const Checkpoint& ckpt, const BackboneConfig& backbone, const ArcConfig& arc,
                    const std::optional<Digest>& expected_digest) {
  if (expected_digest && *expected_digest != ckpt.config_digest) {
    throw ConfigError("checkpoint config digest " + to_hex(ckpt.config_digest) +
                      " does not match the supplied config (" + to_hex(*expected_digest) + ")");
  }
  LoadedModel model{BackboneWeights::zeros(backbone), std::nullopt, ckpt.fused,
                    ckpt.config_digest};
  if (!ckpt.fused) model.bank.emplace(arc, backbone);

  std::set<std::string> used;
  auto fill = [&](const std::string& name, Matrix& dst) {
    const Matrix* src = ckpt.find(name);
    if (src == nullptr) throw ConfigError("checkpoint lacks tensor '" + name + "'");
    if (!src->same_shape(dst)) {
      throw ConfigError("checkpoint tensor '" + name + "' has shape " + src->shape_string() +
                        ", config implies " + dst.shape_string());
    }
    dst = *src;
    used.insert(name);
  };
  for (auto& [name, m] : model.weights.named_tensors()) fill(name, *m);
  if (model.bank) {
    for (auto& [name, m] : model.bank->tensors()) fill(name, m);
  }
  for (const auto& [name, m] : ckpt.tensors) {
    if (!used.contains(name)) {
      throw ConfigError("checkpoint holds tensor '" + name + "' that the config does not define" +
                        (ckpt.fused ? " (fused checkpoints carry backbone tensors only)" : ""));
    }
  }
  return model;
}

}  // namespace arcl

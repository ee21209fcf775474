#include "polyth/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace polyth {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'N', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw CheckpointError(CheckpointError::Kind::Malformed, std::string(what) + " too large");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  float f32() {
    const std::uint32_t bits = u32("parameter data");
    return std::bit_cast<float>(bits);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint truncated while reading " + std::string(what) + " at offset " +
                                std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* to_string(CheckpointError::Kind kind) {
  switch (kind) {
    case CheckpointError::Kind::Io: return "io";
    case CheckpointError::Kind::BadMagic: return "bad-magic";
    case CheckpointError::Kind::UnsupportedVersion: return "unsupported-version";
    case CheckpointError::Kind::Truncated: return "truncated";
    case CheckpointError::Kind::ChecksumMismatch: return "checksum-mismatch";
    case CheckpointError::Kind::Malformed: return "malformed";
  }
  return "unknown";
}

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const ModelConfig& config) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::string text = config.to_text();
  put_u32(out, checked_u32(text.size(), "config text"));
  put_bytes(out, text);
  put_u32(out, checked_u32(params.size(), "parameter count"));
  for (const auto& e : params) {
    put_u32(out, checked_u32(e.name.size(), "parameter name"));
    put_bytes(out, e.name);
    const Shape& shape = e.param.value.shape();
    put_u32(out, checked_u32(shape.size(), "rank"));
    for (std::size_t extent : shape) put_u32(out, checked_u32(extent, "extent"));
    for (double v : e.param.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  put_u32(out, crc32_of(std::span(out).subspan(sizeof(kMagic))));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(Kind::BadMagic, "checkpoint: missing PLNT magic");
  }
  Reader in(bytes.subspan(sizeof(kMagic)));
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::UnsupportedVersion, "checkpoint: unsupported version " + std::to_string(version) +
                                                        " (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  const std::uint32_t text_len = in.u32("config length");
  const std::string text = in.text(text_len, "config text");
  const std::uint32_t count = in.u32("parameter count");

  struct Raw {
    std::string name;
    Shape shape;
    std::vector<double> data;
  };
  std::vector<Raw> raw;
  for (std::uint32_t p = 0; p < count; ++p) {
    Raw r;
    r.name = in.text(in.u32("name length"), "parameter name");
    const std::uint32_t rank = in.u32("rank");
    if (rank == 0 || rank > 8) throw CheckpointError(Kind::Malformed, "checkpoint: bad rank for " + r.name);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(in.u32("extent"));
      if (r.shape.back() == 0) throw CheckpointError(Kind::Malformed, "checkpoint: zero extent in " + r.name);
      n *= r.shape.back();
    }
    if (n > in.remaining() / 4) {
      throw CheckpointError(Kind::Truncated, "checkpoint truncated in data of " + r.name);
    }
    r.data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) r.data.push_back(static_cast<double>(in.f32()));
    raw.push_back(std::move(r));
  }
  const std::size_t body_end = sizeof(kMagic) + in.pos();
  const std::uint32_t stored = in.u32("checksum");
  if (in.remaining() != 0) {
    throw CheckpointError(Kind::Malformed, "checkpoint: " + std::to_string(in.remaining()) + " trailing bytes");
  }
  const std::uint32_t actual = crc32_of(bytes.subspan(sizeof(kMagic), body_end - sizeof(kMagic)));
  if (stored != actual) throw CheckpointError(Kind::ChecksumMismatch, "checkpoint: checksum mismatch");

  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_text(text);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::Malformed, std::string("checkpoint: bad config: ") + e.what());
  }
  const ParamStore expected = make_params(ck.config);
  if (expected.size() != raw.size()) {
    throw CheckpointError(Kind::Malformed, "checkpoint: parameter count does not match its config");
  }
  std::size_t i = 0;
  for (const auto& e : expected) {
    if (raw[i].name != e.name || raw[i].shape != e.param.value.shape()) {
      throw CheckpointError(Kind::Malformed, "checkpoint: parameter " + std::to_string(i) + " is '" + raw[i].name +
                                                 "' " + shape_str(raw[i].shape) + ", expected '" + e.name + "' " +
                                                 shape_str(e.param.value.shape()));
    }
    ck.params.add(raw[i].name, Tensor(raw[i].shape, std::move(raw[i].data)));
    ++i;
  }
  return ck;
}

void save_checkpoint(const ParamStore& params, const ModelConfig& config, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(params, config);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace polyth

#pragma once

// On-disk formats.
//
// MRK1 container (little-endian):
//   bytes 0..3   magic "MRK1" (4D 52 4B 31)
//   u32 kind     0 = image, 1 = kspace, 2 = mask, 3 = coil stack
//   u32 n_coils, u32 h, u32 w
//   payload      masks: one byte (0/1) per position, n_coils must be 1
//                otherwise: interleaved re/im float32, coil-major, row-major
//
// Checkpoint: a text manifest followed by a raw little-endian float64 blob.
//   UDRCKPT1
//   config blocks=J channels=n tokens=L contrasts=C
//   step <k>
//   adam_step <k>
//   meta <key>=<value>              (zero or more)
//   tensors <count>
//   <name> <dim0> ... <dimN> <byte offset> <byte length>
//   data
//   <blob>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "udr/adam.hpp"
#include "udr/complex_image.hpp"
#include "udr/denoiser.hpp"
#include "udr/errors.hpp"
#include "udr/mask.hpp"

namespace udr::io {

namespace fs = std::filesystem;

enum class Kind : std::uint32_t { image = 0, kspace = 1, mask = 2, coil_stack = 3 };

constexpr std::uint64_t kMaxPayloadBytes = 1ULL << 30;
constexpr std::size_t kHeaderBytes = 20;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

inline void put_f32(std::string& buf, double d) { put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(d))); }

inline double get_f32(const std::string& buf, std::size_t off) {
  return static_cast<double>(std::bit_cast<float>(get_u32(buf, off)));
}

inline void put_f64(std::string& buf, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline double get_f64(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return std::bit_cast<double>(v);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string header(Kind kind, std::size_t coils, std::size_t h, std::size_t w) {
  std::string buf = "MRK1";
  put_u32(buf, static_cast<std::uint32_t>(kind));
  put_u32(buf, static_cast<std::uint32_t>(coils));
  put_u32(buf, static_cast<std::uint32_t>(h));
  put_u32(buf, static_cast<std::uint32_t>(w));
  return buf;
}

}  // namespace detail

/// Parsed MRK1 file.
struct Container {
  Kind kind = Kind::image;
  std::size_t h = 0, w = 0;
  CoilStack stack;                  // image / kspace / coil_stack
  std::vector<std::uint8_t> mask;   // mask
};

/// Serializes a stack of complex grids. Values are narrowed to float32.
inline std::string encode_stack(const CoilStack& stack, Kind kind) {
  if (stack.empty()) throw DimensionError("cannot serialize an empty stack");
  if (kind == Kind::mask) throw ContractError("use encode_mask for masks");
  const std::size_t h = stack[0].height(), w = stack[0].width();
  std::string buf = detail::header(kind, stack.size(), h, w);
  buf.reserve(kHeaderBytes + stack.size() * h * w * 8);
  for (const auto& img : stack) {
    if (img.height() != h || img.width() != w) throw DimensionError("stack members differ in extent");
    for (auto v : img.values()) {
      detail::put_f32(buf, v.real());
      detail::put_f32(buf, v.imag());
    }
  }
  return buf;
}

inline std::string encode_mask(const SamplingMask& m) {
  std::string buf = detail::header(Kind::mask, 1, m.h, m.w);
  for (auto b : m.bits) buf.push_back(static_cast<char>(b ? 1 : 0));
  return buf;
}

/// Validates the header against the byte count before touching the payload.
inline Container decode(const std::string& bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated MRK1 header", bytes.size());
  if (bytes.compare(0, 4, "MRK1") != 0) throw FormatError("bad magic, expected MRK1", 0);
  const auto kind = detail::get_u32(bytes, 4);
  const auto coils = detail::get_u32(bytes, 8);
  const auto h = detail::get_u32(bytes, 12);
  const auto w = detail::get_u32(bytes, 16);
  if (kind > 3) throw FormatError("unknown container kind " + std::to_string(kind), 4);
  if (coils == 0) throw FormatError("coil count must be positive", 8);
  if (h == 0) throw FormatError("height must be positive", 12);
  if (w == 0) throw FormatError("width must be positive", 16);
  const Kind k = static_cast<Kind>(kind);
  if (k == Kind::mask && coils != 1) throw FormatError("masks carry exactly one plane", 8);
  const std::uint64_t per = (k == Kind::mask) ? 1 : 8;
  // each factor < 2^32; checking after every product keeps the running value < 2^62
  std::uint64_t payload = static_cast<std::uint64_t>(coils) * h;
  if (payload > kMaxPayloadBytes || (payload *= w) > kMaxPayloadBytes || (payload *= per) > kMaxPayloadBytes)
    throw FormatError("payload exceeds the 1 GiB cap", 8);
  if (bytes.size() - kHeaderBytes < payload)
    throw FormatError("payload truncated: header promises " + std::to_string(payload) + " bytes, file has " +
                          std::to_string(bytes.size() - kHeaderBytes),
                      bytes.size());
  if (bytes.size() - kHeaderBytes > payload)
    throw FormatError("trailing bytes after payload", kHeaderBytes + payload);

  Container c;
  c.kind = k;
  c.h = h;
  c.w = w;
  if (k == Kind::mask) {
    c.mask.resize(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < c.mask.size(); ++i) {
      const auto b = static_cast<unsigned char>(bytes[kHeaderBytes + i]);
      if (b > 1) throw FormatError("mask byte must be 0 or 1", kHeaderBytes + i);
      c.mask[i] = b;
    }
    return c;
  }
  const Domain d = k == Kind::kspace ? Domain::kspace : Domain::image;
  std::size_t off = kHeaderBytes;
  for (std::uint32_t ci = 0; ci < coils; ++ci) {
    ComplexImage img(h, w, d);
    for (auto& v : img.values()) {
      v = cplx(detail::get_f32(bytes, off), detail::get_f32(bytes, off + 4));
      off += 8;
    }
    c.stack.push_back(std::move(img));
  }
  return c;
}

inline void save_image(const fs::path& path, const ComplexImage& img) {
  detail::write_file(path, encode_stack({img}, img.domain() == Domain::kspace ? Kind::kspace : Kind::image));
}

inline void save_stack(const fs::path& path, const CoilStack& stack, Kind kind) {
  detail::write_file(path, encode_stack(stack, kind));
}

inline void save_coils(const fs::path& path, const CoilMaps& c) { save_stack(path, c.maps, Kind::coil_stack); }

inline void save_mask(const fs::path& path, const SamplingMask& m) { detail::write_file(path, encode_mask(m)); }

inline Container load(const fs::path& path) {
  try {
    return decode(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

inline ComplexImage load_image(const fs::path& path) {
  auto c = load(path);
  if (c.kind == Kind::mask || c.stack.size() != 1)
    throw FormatError(path.string() + ": expected a single complex image", 4);
  return std::move(c.stack[0]);
}

inline CoilStack load_stack(const fs::path& path) {
  auto c = load(path);
  if (c.kind == Kind::mask) throw FormatError(path.string() + ": expected complex data, found a mask", 4);
  return std::move(c.stack);
}

inline CoilMaps load_coils(const fs::path& path) { return CoilMaps{load_stack(path)}; }

inline SamplingMask load_mask(const fs::path& path) {
  auto c = load(path);
  if (c.kind != Kind::mask) throw FormatError(path.string() + ": expected a mask", 4);
  SamplingMask m(c.h, c.w, 0, MaskKind::main);
  m.bits = std::move(c.mask);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  DenoiserParams params;
  AdamState adam;
  long step = 0;
  std::map<std::string, std::string> meta;
};

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const auto& cfg = ck.params.config;
  std::ostringstream man;
  man << "UDRCKPT1\n";
  man << "config blocks=" << cfg.blocks << " channels=" << cfg.channels << " tokens=" << cfg.tokens
      << " contrasts=" << cfg.contrasts << "\n";
  man << "step " << ck.step << "\n";
  man << "adam_step " << ck.adam.step << "\n";
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of(" =\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("checkpoint meta key/value not representable: " + k);
    man << "meta " << k << "=" << v << "\n";
  }

  std::vector<std::pair<std::string, const Tensor*>> all;
  for (const auto& [n, t] : ck.params.tensors) all.emplace_back(n, &t);
  for (const auto& [n, t] : ck.adam.m) all.emplace_back("adam.m/" + n, &t);
  for (const auto& [n, t] : ck.adam.v) all.emplace_back("adam.v/" + n, &t);

  man << "tensors " << all.size() << "\n";
  std::string blob;
  for (const auto& [name, t] : all) {
    man << name;
    for (auto d : t->shape()) man << ' ' << d;
    man << ' ' << blob.size() << ' ' << t->size() * 8 << "\n";
    for (double v : t->data()) detail::put_f64(blob, v);
  }
  man << "data\n";
  detail::write_file(path, man.str() + blob);
}

namespace detail {

inline std::size_t parse_size(const std::string& tok, const std::string& what, std::size_t off) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError("checkpoint: bad " + what + " '" + tok + "'", off);
  }
}

}  // namespace detail

/// Reads a checkpoint and validates every tensor name and shape against the
/// layout implied by `expected`. Offending names are listed in the error.
inline Checkpoint load_checkpoint(const fs::path& path, const DenoiserConfig& expected);

/// Reads a checkpoint using the configuration recorded in its manifest.
inline Checkpoint load_checkpoint(const fs::path& path);

namespace detail {

inline Checkpoint parse_checkpoint(const fs::path& path, const DenoiserConfig* expected) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw FormatError(path.string() + ": truncated checkpoint manifest", pos);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto tokens = [](const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> t;
    for (std::string s; is >> s;) t.push_back(s);
    return t;
  };

  if (next_line() != "UDRCKPT1") throw FormatError(path.string() + ": bad checkpoint magic", 0);
  Checkpoint ck;
  DenoiserConfig cfg;
  {
    const std::size_t at = pos;
    auto t = tokens(next_line());
    if (t.empty() || t[0] != "config") throw FormatError(path.string() + ": expected config line", at);
    for (std::size_t i = 1; i < t.size(); ++i) {
      const auto eq = t[i].find('=');
      if (eq == std::string::npos) throw FormatError(path.string() + ": bad config entry", at);
      const auto key = t[i].substr(0, eq);
      const auto val = parse_size(t[i].substr(eq + 1), key, at);
      if (key == "blocks") cfg.blocks = val;
      else if (key == "channels") cfg.channels = val;
      else if (key == "tokens") cfg.tokens = val;
      else if (key == "contrasts") cfg.contrasts = val;
      else throw FormatError(path.string() + ": unknown config key " + key, at);
    }
  }
  {
    const std::size_t at = pos;
    auto t = tokens(next_line());
    if (t.size() != 2 || t[0] != "step") throw FormatError(path.string() + ": expected step line", at);
    ck.step = static_cast<long>(parse_size(t[1], "step", at));
  }
  {
    const std::size_t at = pos;
    auto t = tokens(next_line());
    if (t.size() != 2 || t[0] != "adam_step") throw FormatError(path.string() + ": expected adam_step line", at);
    ck.adam.step = static_cast<long>(parse_size(t[1], "adam_step", at));
  }
  std::size_t count = 0;
  for (;;) {
    const std::size_t at = pos;
    const std::string line = next_line();
    if (line.starts_with("meta ")) {
      const auto body = line.substr(5);
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw FormatError(path.string() + ": bad meta line", at);
      ck.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    auto t = tokens(line);
    if (t.size() != 2 || t[0] != "tensors") throw FormatError(path.string() + ": expected tensors line", at);
    count = parse_size(t[1], "tensor count", at);
    break;
  }
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, length, line_at;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = pos;
    auto t = tokens(next_line());
    if (t.size() < 4) throw FormatError(path.string() + ": short tensor line", at);
    Entry e{t[0], {}, parse_size(t[t.size() - 2], "offset", at), parse_size(t.back(), "length", at), at};
    for (std::size_t k = 1; k + 2 < t.size(); ++k) {
      e.shape.push_back(parse_size(t[k], "extent", at));
      if (e.shape.back() == 0) throw FormatError(path.string() + ": zero extent for " + e.name, at);
    }
    if (e.length > kMaxPayloadBytes) throw FormatError(path.string() + ": tensor exceeds 1 GiB cap", at);
    if (e.length != shape_size(e.shape) * 8)
      throw FormatError(path.string() + ": length of " + e.name + " disagrees with its shape", at);
    entries.push_back(std::move(e));
  }
  if (next_line() != "data") throw FormatError(path.string() + ": expected data marker", pos);
  const std::size_t blob = pos;
  for (const auto& e : entries)
    if (e.offset > bytes.size() - blob || e.length > bytes.size() - blob - e.offset)
      throw FormatError(path.string() + ": tensor " + e.name + " extends past end of file", e.line_at);

  const DenoiserConfig& want = expected ? *expected : cfg;
  if (expected && !(cfg == *expected)) {
    std::ostringstream os;
    os << "checkpoint config (J=" << cfg.blocks << ", n=" << cfg.channels << ", L=" << cfg.tokens
       << ", contrasts=" << cfg.contrasts << ") does not match requested (J=" << expected->blocks
       << ", n=" << expected->channels << ", L=" << expected->tokens << ", contrasts=" << expected->contrasts << ")";
    std::map<std::string, Shape> have;
    for (const auto& e : entries) have[e.name] = e.shape;
    std::vector<std::string> missing, wrong;
    for (const auto& [name, shape] : param_layout(*expected)) {
      auto it = have.find(name);
      if (it == have.end()) missing.push_back(name);
      else if (it->second != shape) wrong.push_back(name);
    }
    if (!missing.empty()) {
      os << "; missing:";
      for (const auto& m : missing) os << ' ' << m;
    }
    if (!wrong.empty()) {
      os << "; shape mismatch:";
      for (const auto& m : wrong) os << ' ' << m;
    }
    throw CheckpointError(path.string() + ": " + os.str());
  }

  std::map<std::string, Shape> layout;
  for (auto& [n, s] : param_layout(want)) layout[n] = s;
  std::vector<std::string> missing, unexpected, wrong;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    Tensor t(e.shape);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = get_f64(bytes, blob + e.offset + 8 * k);
    std::string base = e.name;
    ParamSet* dst = &ck.params.tensors;
    if (e.name.starts_with("adam.m/")) {
      base = e.name.substr(7);
      dst = &ck.adam.m;
    } else if (e.name.starts_with("adam.v/")) {
      base = e.name.substr(7);
      dst = &ck.adam.v;
    }
    auto it = layout.find(base);
    if (it == layout.end()) {
      unexpected.push_back(e.name);
      continue;
    }
    if (it->second != e.shape) wrong.push_back(e.name);
    if (dst == &ck.params.tensors) seen.insert(base);
    (*dst)[base] = std::move(t);
  }
  for (const auto& [n, s] : layout)
    if (!seen.count(n)) missing.push_back(n);
  if (!missing.empty() || !unexpected.empty() || !wrong.empty()) {
    std::ostringstream os;
    os << path.string() << ": checkpoint does not match the model layout";
    if (!missing.empty()) {
      os << "; missing:";
      for (const auto& m : missing) os << ' ' << m;
    }
    if (!unexpected.empty()) {
      os << "; unexpected:";
      for (const auto& m : unexpected) os << ' ' << m;
    }
    if (!wrong.empty()) {
      os << "; shape mismatch:";
      for (const auto& m : wrong) os << ' ' << m;
    }
    throw CheckpointError(os.str());
  }
  ck.params.config = want;
  return ck;
}

}  // namespace detail

inline Checkpoint load_checkpoint(const fs::path& path, const DenoiserConfig& expected) {
  return detail::parse_checkpoint(path, &expected);
}

inline Checkpoint load_checkpoint(const fs::path& path) { return detail::parse_checkpoint(path, nullptr); }

}  // namespace udr::io

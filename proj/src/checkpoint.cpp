#include "indrnn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace indrnn {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'D', 'R'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t payload_crc(const std::string& bytes, std::size_t pos, std::size_t len) {
  auto crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos),
              static_cast<uInt>(len));
  return static_cast<std::uint32_t>(crc);
}

// Explicit little-endian encoding keeps files portable across hosts.
struct Writer {
  std::string bytes;

  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    bytes.append(static_cast<const char*>(p), n);
  }

  void section(const std::string& name, const std::string& payload) {
    u16(static_cast<std::uint16_t>(name.size()));
    bytes += name;
    u64(payload.size());
    const std::size_t start = bytes.size();
    bytes += payload;
    u32(payload_crc(bytes, start, payload.size()));
  }
};

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) {
      throw FormatError("checkpoint: unexpected end of file", pos);
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= std::uint16_t(std::uint8_t(bytes[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }

  // Returns the payload of the named section, validating name and crc.
  std::string section(const char* expect) {
    const std::size_t name_at = pos;
    const std::string name = str(u16());
    if (name != expect) {
      throw FormatError("checkpoint: expected section '" + std::string(expect) +
                            "', found '" + name + "'",
                        name_at);
    }
    const std::uint64_t len = u64();
    need(len);
    const std::size_t payload_at = pos;
    std::string payload = str(len);
    const std::uint32_t stored = u32();
    if (stored != payload_crc(bytes, payload_at, len)) {
      throw FormatError("checkpoint: crc mismatch in section '" + name + "'",
                        payload_at);
    }
    return payload;
  }
};

std::string encode_vec(const Vec& v) {
  Writer w;
  w.u64(static_cast<std::uint64_t>(v.size()));
  w.raw(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
  return std::move(w.bytes);
}

Vec decode_vec(const std::string& payload, const char* what) {
  Reader r{payload};
  const std::uint64_t n = r.u64();
  if (payload.size() != 8 + n * sizeof(double)) {
    throw FormatError("checkpoint: section '" + std::string(what) + "' length mismatch",
                      0);
  }
  Vec v(static_cast<Index>(n));
  std::memcpy(v.data(), payload.data() + 8, n * sizeof(double));
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);

  w.section("config", ck.config_text);

  Writer meta;
  meta.u64(ck.loop_pos);
  meta.u64(ck.opt_step);
  meta.u64(ck.bad_evals);
  meta.u64(ck.patience);
  meta.f64(ck.lr);
  meta.f64(ck.best_metric);
  meta.f64(ck.lr_factor);
  for (auto word : ck.rng_state) meta.u64(word);
  w.section("meta", meta.bytes);

  w.section("params", encode_vec(ck.params));
  w.section("adam_m", encode_vec(ck.adam_m));
  w.section("adam_v", encode_vec(ck.adam_v));

  Writer bufs;
  bufs.u64(ck.buffers.size());
  for (const auto& [name, mat] : ck.buffers) {
    bufs.u16(static_cast<std::uint16_t>(name.size()));
    bufs.bytes += name;
    bufs.u64(static_cast<std::uint64_t>(mat.rows()));
    bufs.u64(static_cast<std::uint64_t>(mat.cols()));
    bufs.raw(mat.data(), static_cast<std::size_t>(mat.size()) * sizeof(double));
  }
  w.section("buffers", bufs.bytes);

  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (not an INDR file)", 0);
  }
  r.pos = 4;
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kVersion) {
    throw FormatError("checkpoint: version mismatch (file has version " +
                          std::to_string(ck.version) + ", this build reads " +
                          std::to_string(kVersion) + ")",
                      4);
  }

  ck.config_text = r.section("config");

  {
    const std::string payload = r.section("meta");
    if (payload.size() != 88) {
      throw FormatError("checkpoint: section 'meta' length mismatch",
                        r.pos);
    }
    Reader m{payload};
    ck.loop_pos = m.u64();
    ck.opt_step = m.u64();
    ck.bad_evals = m.u64();
    ck.patience = m.u64();
    ck.lr = m.f64();
    ck.best_metric = m.f64();
    ck.lr_factor = m.f64();
    for (auto& word : ck.rng_state) word = m.u64();
  }

  ck.params = decode_vec(r.section("params"), "params");
  ck.adam_m = decode_vec(r.section("adam_m"), "adam_m");
  ck.adam_v = decode_vec(r.section("adam_v"), "adam_v");

  {
    const std::string payload = r.section("buffers");
    Reader b{payload};
    const std::uint64_t count = b.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::string name = b.str(b.u16());
      const auto rows = static_cast<Index>(b.u64());
      const auto cols = static_cast<Index>(b.u64());
      Mat mat(rows, cols);
      const std::size_t n = static_cast<std::size_t>(mat.size()) * sizeof(double);
      b.need(n);
      std::memcpy(mat.data(), payload.data() + b.pos, n);
      b.pos += n;
      ck.buffers.emplace_back(name, std::move(mat));
    }
  }

  if (r.pos != bytes.size()) {
    throw FormatError("checkpoint: trailing bytes after last section",
                      r.pos);
  }
  return ck;
}

Checkpoint make_checkpoint(const std::string& config_text, const Network& net,
                           const TrainState& state, const Rng& rng,
                           std::uint64_t loop_pos) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.loop_pos = loop_pos;
  ck.opt_step = state.step;
  ck.lr = state.lr;
  ck.best_metric = state.best_metric;
  ck.bad_evals = static_cast<std::uint64_t>(state.bad_evals);
  ck.patience = static_cast<std::uint64_t>(state.patience);
  ck.lr_factor = state.lr_factor;
  ck.rng_state = rng.state();
  net.copy_params_to(ck.params);
  ck.adam_m = state.m;
  ck.adam_v = state.v;
  for (const auto& buf : net.buffer_info()) {
    ck.buffers.emplace_back(buf.name, *buf.data);
  }
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, Network& net, TrainState& state, Rng& rng) {
  if (ck.params.size() != net.n_params()) {
    throw ConfigError("checkpoint: parameter count " + std::to_string(ck.params.size()) +
                      " does not match the network (" + std::to_string(net.n_params()) +
                      ")");
  }
  net.set_params(ck.params);

  const auto& infos = net.buffer_info();
  if (ck.buffers.size() != infos.size()) {
    throw ConfigError("checkpoint: buffer count does not match the network");
  }
  for (std::size_t i = 0; i < infos.size(); ++i) {
    if (ck.buffers[i].first != infos[i].name) {
      throw ConfigError("checkpoint: unexpected buffer '" + ck.buffers[i].first + "'");
    }
    *infos[i].data = ck.buffers[i].second;
  }

  state.m = ck.adam_m;
  state.v = ck.adam_v;
  state.step = ck.opt_step;
  state.lr = ck.lr;
  state.best_metric = ck.best_metric;
  state.bad_evals = static_cast<Index>(ck.bad_evals);
  state.patience = static_cast<Index>(ck.patience);
  state.lr_factor = ck.lr_factor;
  rng.set_state(ck.rng_state);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot write \"" + path + "\"");
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw ConfigError("checkpoint: write to \"" + path + "\" failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open \"" + path + "\"");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace indrnn

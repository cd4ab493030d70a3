#include "mea/arch/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mea/errors.hpp"

namespace mea::arch {
namespace {

constexpr char kMagic[8] = {'M', 'E', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindMea = 1;
constexpr std::uint32_t kKindNetwork = 2;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in_[pos_++])} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(in_[pos_++])} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(in_.data(), kMagic, sizeof(kMagic)) != 0) {
      throw FormatError("not a checkpoint (bad magic at byte offset 0)");
    }
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_network(Writer& w, const nn::Network& net) {
  w.u64(net.input_dim());
  w.u64(net.depth());
  for (const auto& layer : net.layers()) {
    w.u64(layer.out_dim());
    w.u64(layer.in_dim());
    w.u8(static_cast<std::uint8_t>(layer.activation));
    w.u8(layer.frozen ? 1 : 0);
    for (double v : layer.weights.values()) w.f64(v);
    for (double v : layer.bias.values()) w.f64(v);
  }
}

nn::Network read_network(Reader& r) {
  const std::uint64_t input_dim = r.u64();
  const std::uint64_t depth = r.u64();
  if (depth > 4096) throw FormatError("implausible network depth in checkpoint");
  std::vector<nn::DenseLayer> layers;
  for (std::uint64_t i = 0; i < depth; ++i) {
    const std::uint64_t out = r.u64();
    const std::uint64_t in = r.u64();
    const std::uint8_t act = r.u8();
    const std::uint8_t frozen = r.u8();
    if (act > 1 || frozen > 1) {
      throw FormatError("bad layer flags at byte offset " + std::to_string(r.pos()));
    }
    if (out == 0 || in == 0) throw FormatError("zero layer dimension in checkpoint");
    r.need((out * in + out) * 8);
    std::vector<double> w(out * in);
    for (double& v : w) v = r.f64();
    std::vector<double> b(out);
    for (double& v : b) v = r.f64();
    layers.emplace_back(nn::Tensor({out, in}, std::move(w)), nn::Tensor({out}, std::move(b)),
                        static_cast<nn::Activation>(act), frozen == 1);
  }
  try {
    return nn::Network(input_dim, std::move(layers));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint layers do not chain: ") + e.what());
  }
}

void write_preamble(Writer& w, std::uint32_t kind, const std::string& header) {
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(kind);
  w.str(header);
}

std::string read_preamble(Reader& r, std::uint32_t expected_kind) {
  r.expect_magic();
  if (const auto v = r.u32(); v != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  if (const auto kind = r.u32(); kind != expected_kind) {
    throw FormatError("checkpoint kind " + std::to_string(kind) + " where " +
                      std::to_string(expected_kind) + " was expected");
  }
  return r.str();
}

}  // namespace

std::string serialize(const MEANet& net) {
  Writer w;
  write_preamble(w, kKindMea, nlohmann::json(net.config()).dump());
  w.u32(5);
  write_network(w, net.main());
  write_network(w, net.exit1());
  write_network(w, net.adaptive());
  write_network(w, net.extension());
  write_network(w, net.exit2());
  return w.take();
}

MEANet deserialize_mea(const std::string& bytes) {
  Reader r(bytes);
  MEAConfig config;
  try {
    config = nlohmann::json::parse(read_preamble(r, kKindMea)).get<MEAConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (r.u32() != 5) throw FormatError("MEANet checkpoint must hold five networks");
  auto main = read_network(r);
  auto exit1 = read_network(r);
  auto adaptive = read_network(r);
  auto extension = read_network(r);
  auto exit2 = read_network(r);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  try {
    return MEANet(std::move(config), std::move(main), std::move(exit1), std::move(adaptive),
                  std::move(extension), std::move(exit2));
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint does not match its config: ") + e.what());
  }
}

std::string serialize(const NamedNetwork& net) {
  Writer w;
  write_preamble(w, kKindNetwork, nlohmann::json{{"role", net.role}}.dump());
  w.u32(1);
  write_network(w, net.network);
  return w.take();
}

NamedNetwork deserialize_network(const std::string& bytes) {
  Reader r(bytes);
  NamedNetwork out;
  try {
    out.role = nlohmann::json::parse(read_preamble(r, kKindNetwork)).at("role").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (r.u32() != 1) throw FormatError("network checkpoint must hold one network");
  out.network = read_network(r);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const MEANet& net, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(net));
}

MEANet load_mea_checkpoint(const std::filesystem::path& path) {
  return deserialize_mea(read_file(path));
}

void save_checkpoint(const NamedNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(net));
}

NamedNetwork load_network_checkpoint(const std::filesystem::path& path) {
  return deserialize_network(read_file(path));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string main_block_digest(const MEANet& net) {
  // Frozen flags are left out: freezing must not change the digest.
  Writer w;
  for (const nn::Network* block : {&net.main(), &net.exit1()}) {
    for (const auto& layer : block->layers()) {
      w.u64(layer.out_dim());
      w.u64(layer.in_dim());
      w.u8(static_cast<std::uint8_t>(layer.activation));
      for (double v : layer.weights.values()) w.f64(v);
      for (double v : layer.bias.values()) w.f64(v);
    }
  }
  return sha256_hex(w.take());
}

}  // namespace mea::arch

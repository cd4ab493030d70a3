#pragma once

// Versioned little-endian binary checkpoints.
//
//   magic   "MEACKPT\0"        8 bytes
//   version u32 (= 1)
//   kind    u32 (1 = MEANet, 2 = standalone network)
//   header  u64 length + JSON text (config or role)
//   count   u32 networks, then per network:
//             u64 input_dim, u64 depth, per layer:
//             u64 out, u64 in, u8 activation, u8 frozen,
//             out*in weight doubles, out bias doubles (IEEE-754 bit patterns)
//
// Doubles are stored as raw bit patterns, so a round trip is bit-exact.

#include <filesystem>
#include <string>
#include <vector>

#include "mea/arch/mea_net.hpp"
#include "mea/nn/network.hpp"

namespace mea::arch {

std::string serialize(const MEANet& net);
MEANet deserialize_mea(const std::string& bytes);

struct NamedNetwork {
  std::string role;  // "cloud" or "feature-tail"
  nn::Network network;
};

std::string serialize(const NamedNetwork& net);
NamedNetwork deserialize_network(const std::string& bytes);

// Writes through a temporary file and renames, so a failed save leaves no
// partial checkpoint behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

void save_checkpoint(const MEANet& net, const std::filesystem::path& path);
MEANet load_mea_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const NamedNetwork& net, const std::filesystem::path& path);
NamedNetwork load_network_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
// Digest of the main block and exit 1 parameter values and shapes.
std::string main_block_digest(const MEANet& net);

}  // namespace mea::arch

// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/checkpoint.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "tridx/error.hpp"

namespace tridx {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'D', 'X', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::ostream& out, U v) {
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::string& path) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw DataError("checkpoint " + path + " is truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_str(std::ostream& out, std::string_view s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in, const std::string& path) {
  const auto n = get_le<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw DataError("checkpoint " + path + " has an implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("checkpoint " + path + " is truncated");
  return s;
}

CheckpointHeader read_header(std::istream& in, const std::string& path) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint " + path + " has format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  CheckpointHeader h;
  h.stage = get_str(in, path);
  h.config_digest = get_str(in, path);
  h.lineage = get_str(in, path);
  return h;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return in;
}

}  // namespace

std::string digest_hex(std::string_view data) {
  if (sodium_init() < 0) throw IoError("libsodium failed to initialise");
  unsigned char out[crypto_generichash_BYTES];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(data.data()), data.size(), nullptr, 0);
  char hex[2 * crypto_generichash_BYTES + 1];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

void save_checkpoint(const std::string& path, const CheckpointHeader& header, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_str(out, header.stage);
  put_str(out, header.config_digest);
  put_str(out, header.lineage);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {
    put_str(out, name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out.flush()) throw IoError("failed while writing checkpoint " + path);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
  auto in = open_in(path);
  return read_header(in, path);
}

CheckpointHeader load_checkpoint(const std::string& path, const std::string& expected_digest, ParamStore& store) {
  auto in = open_in(path);
  CheckpointHeader h = read_header(in, path);
  if (h.config_digest != expected_digest) {
    throw ConfigError("checkpoint " + path + " was written for model configuration " + h.config_digest.substr(0, 12) +
                      ", current configuration is " + expected_digest.substr(0, 12));
  }
  const auto count = get_le<std::uint32_t>(in, path);
  if (count != store.entries().size()) {
    throw DataError("checkpoint " + path + " holds " + std::to_string(count) + " blocks, model has " +
                    std::to_string(store.entries().size()));
  }
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::string name = get_str(in, path);
    if (!store.contains(name)) throw DataError("checkpoint block '" + name + "' is not a model parameter");
    Tensor t = store.get(name);
    const auto ndim = get_le<std::uint32_t>(in, path);
    Shape shape(ndim);
    for (auto& e : shape) e = get_le<std::uint64_t>(in, path);
    if (shape != t.shape()) {
      throw DataError("checkpoint block '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                      shape_str(t.shape()));
    }
    for (auto& v : t.mutable_values()) v = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
  }
  return h;
}

}  // namespace tridx
